# Regenerates the desk NLG fixture: python3 generate.py
import json, random, itertools, os
HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(2019)
# value -> dict of case forms
names = {
 "Ferdinanda": dict(nom="Ferdinanda", loc="Ferdinandě"),
 "Kolkovna": dict(nom="Kolkovna", loc="Kolkovně"),
 "Lokál": dict(nom="Lokál", loc="Lokále"),
 "Café Savoy": dict(nom="Café Savoy", loc="Café Savoy"),
 "Pivo & Basilico": dict(nom="Pivo & Basilico", loc="Pivu & Basilicu"),
 "Švejk": dict(nom="Švejk", loc="Švejkovi"),
 "Mlejnice": dict(nom="Mlejnice", loc="Mlejnici"),
 "Bredovský dvůr": dict(nom="Bredovský dvůr", loc="Bredovském dvoře"),
 "U Fleků": dict(nom="U Fleků", loc="U Fleků"),
 "Kantýna": dict(nom="Kantýna", loc="Kantýně"),
 "Eska": dict(nom="Eska", loc="Esce"),
 "Sansho": dict(nom="Sansho", loc="Sansho"),
 "Kuchyň": dict(nom="Kuchyň", loc="Kuchyni"),
 "Mincovna": dict(nom="Mincovna", loc="Mincovně"),
 "Vinohradský parlament": dict(nom="Vinohradský parlament", loc="Vinohradském parlamentu"),
 "Čestr": dict(nom="Čestr", loc="Čestru"),
 "Pastva": dict(nom="Pastva", loc="Pastvě"),
 "Zlatá studně": dict(nom="Zlatá studně", loc="Zlaté studni"),
 "Výtopna": dict(nom="Výtopna", loc="Výtopně"),
 "Dish": dict(nom="Dish", loc="Dishi"),
}
areas = {"Karlín":"Karlíně","Smíchov":"Smíchově","Žižkov":"Žižkově","Vinohrady":"Vinohradech","Holešovice":"Holešovicích",
 "Staré Město":"Starém Městě","Malá Strana":"Malé Straně","Nové Město":"Novém Městě","Dejvice":"Dejvicích","Libeň":"Libni"}
nears = {"Národní divadlo":"Národního divadla","Pražský hrad":"Pražského hradu","Karlův most":"Karlova mostu",
 "Václavské náměstí":"Václavského náměstí","Obecní dům":"Obecního domu","Anděl":"Anděla","Vyšehrad":"Vyšehradu",
 "Florenc":"Florence","Letná":"Letné","Rudolfinum":"Rudolfina"}
foods = {"česká":"českou","italská":"italskou","indická":"indickou","čínská":"čínskou","francouzská":"francouzskou",
 "mexická":"mexickou","vietnamská":"vietnamskou","japonská":"japonskou"}
meals = {"snídaně":"snídani","oběd":"oběd","večeře":"večeři"}
price_ranges = ["levné","střední","vysoké"]
addresses = ["Karlova 12","Vodičkova 5","Na Poříčí 30","Dlouhá 44","Újezd 18","Krakovská 7","Husova 3","Jindřišská 21"]
postcodes = ["110 00","120 00","130 00","170 00","180 00"]
prices = ["150 Kč","200 Kč","350 Kč","120 Kč"]

def phone(): return "2" + "".join(rng.choice("0123456789") for _ in range(8))

clauses = {
 "area": [("se nachází v {}", "loc"), ("najdete ji v {}", "loc")],
 "near": [("je poblíž {}", "gen"), ("leží nedaleko {}", "gen")],
 "food": [("podává {} kuchyni", "acc"), ("nabízí {} kuchyni", "acc")],
 "price_range": [("má {} ceny", "id")],
 "phone": [("má telefon {}", "id"), ("přijímá rezervace na čísle {}", "id")],
 "address": [("sídlí na adrese {}", "id")],
 "postcode": [("má PSČ {}", "id")],
 "good_for_meal": [("je vhodná na {}", "acc")],
 "price": [("nabízí menu za {}", "id")],
}
forms_used = {}
def form(key, value, case):
    if key == "name": f = names[value][case]
    elif key == "area": f = areas[value] if case == "loc" else value
    elif key == "near": f = nears[value] if case == "gen" else value
    elif key == "food": f = foods[value] if case == "acc" else value
    elif key == "good_for_meal": f = meals[value] if case == "acc" else value
    else: f = value
    if f != value: forms_used.setdefault(value, set()).add(f)
    return f

pool = {"name": list(names), "area": list(areas), "near": list(nears), "food": list(foods),
        "good_for_meal": list(meals), "price_range": price_ranges, "address": addresses,
        "postcode": postcodes, "price": prices}
order = ["name","area","near","food","good_for_meal","price_range","price","address","postcode","phone","kids_allowed"]
extra = ["area","near","food","good_for_meal","price_range","price","address","postcode","phone"]

patterns = []
for k in range(0, 4):
    for combo in itertools.combinations(extra, k):
        for kids in [None, "kids"]:
            if k == 0 and kids is None: continue
            patterns.append(("inform", ("name",) + combo, kids))
for combo in [("area",),("near",),("food",),("area","food"),("near","food"),("area","near")]:
    patterns.append(("inform_count", ("count",) + combo, None))
    patterns.append(("inform_no_match", combo, None))
rng.shuffle(patterns)

def realize(act, keys, kids):
    if kids: kids = rng.choice(["yes", "no"])
    vals = {}
    for k in keys:
        if k == "phone": vals[k] = phone()
        elif k == "count": vals[k] = str(rng.randint(2, 9))
        else: vals[k] = rng.choice(pool[k])
    mr_slots = [(k, vals[k]) for k in order if k in vals] 
    if act == "inform_count": mr_slots = [("count", vals["count"])] + [(k, vals[k]) for k in order if k in vals and k != "count"]
    if kids: mr_slots.append(("kids_allowed", kids))
    parts, dparts = [], []
    def add(template, key, case):
        f = form(key, vals[key], case)
        parts.append(template.format(f)); dparts.append(template.format("X-" + key))
    rest = [k for k in keys if k not in ("name", "count")]
    if act == "inform":
        if rest and rng.random() < 0.3 and "food" in rest:
            f = form("name", vals["name"], "loc")
            head, dhead = f"V {f} vaří", "V X-name vaří"
            tmpl = "{} kuchyni"
            ff = form("food", vals["food"], "acc")
            parts.append(f"{head} {tmpl.format(ff)}"); dparts.append(f"{dhead} {tmpl.format('X-food')}")
            rest = [k for k in rest if k != "food"]
            subj, dsubj = "restaurace", "restaurace"
            first = False
        else:
            subj, dsubj = form("name", vals["name"], "nom"), "X-name"
            first = True
        cl, dcl = [], []
        for k in rest:
            t, case = rng.choice(clauses[k])
            f = form(k, vals[k], case if case != "id" else "nom")
            cl.append(t.format(f)); dcl.append(t.format("X-" + k))
        if kids == "yes": cl.append("děti jsou vítány"); dcl.append("děti jsou vítány")
        if kids == "no": cl.append("není vhodná pro děti"); dcl.append("není vhodná pro děti")
        if not cl and first:
            cl, dcl = ["je restaurace"], ["je restaurace"]
        def join(xs):
            return xs[0] if len(xs) == 1 else ", ".join(xs[:-1]) + " a " + xs[-1]
        if cl:
            if first:
                parts.append(f"{subj} {join(cl)}"); dparts.append(f"{dsubj} {join(dcl)}")
            else:
                parts.append(f"{subj.capitalize()} {join(cl)}"); dparts.append(f"{dsubj.capitalize()} {join(dcl)}")
        text = " . ".join(parts) + " ."
        dtext = " . ".join(dparts) + " ."
    else:
        loc = []
        dloc = []
        for k in rest:
            if k == "area": f = form(k, vals[k], "loc"); loc.append(f"v {f}"); dloc.append("v X-area")
            elif k == "near": f = form(k, vals[k], "gen"); loc.append(f"poblíž {f}"); dloc.append("poblíž X-near")
            elif k == "food": f = form(k, vals[k], "acc"); loc.append(f"s nabídkou jídel, kde vaří {f} kuchyni"); dloc.append("s nabídkou jídel, kde vaří X-food kuchyni")
        if act == "inform_count":
            text = f"Našel jsem {vals['count']} restaurací " + " ".join(loc) + " ."
            dtext = "Našel jsem X-count restaurací " + " ".join(dloc) + " ."
        else:
            text = "Bohužel nemám žádnou restauraci " + " ".join(loc) + " ."
            dtext = "Bohužel nemám žádnou restauraci " + " ".join(dloc) + " ."
    mr = act + "(" + ",".join(f"{k}={v}" for k, v in mr_slots) + ")"
    return {"mr": mr, "text": text, "delex_text": dtext}

n_test_pat = len(patterns) // 5
n_dev_pat = len(patterns) // 6
test_p, dev_p, train_p = patterns[:n_test_pat], patterns[n_test_pat:n_test_pat+n_dev_pat], patterns[n_test_pat+n_dev_pat:]
def make(pats, n):
    out = []
    for i in range(n):
        act, keys, kids = pats[i % len(pats)] if i < len(pats) else rng.choice(pats)
        out.append(realize(act, keys, kids))
    return out
train, dev, test = make(train_p, 357), make(dev_p, 78), make(test_p, 84)
for name, rows in [("train", train), ("dev", dev), ("test", test)]:
    with open(f"{HERE}/{name}.jsonl", "w") as f:
        for r in rows: f.write(json.dumps(r, ensure_ascii=False) + "\n")
with open(f"{HERE}/surface_forms.tsv", "w") as f:
    for v in sorted(forms_used):
        f.write(v + "\t" + "|".join(sorted(forms_used[v])) + "\n")
print(len(patterns), len(train_p), len(dev_p), len(test_p))
