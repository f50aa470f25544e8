#include <stdio.h>
#include "d2t.h"

int main(int argc, char **argv) {
    const char *text = argc > 1 ? argv[1] : "inform(name=Ferdinanda,area=Karlín)";
    D2tSchema *schema = d2t_schema_restaurant();
    D2tMr *mr = NULL;
    char *flat = NULL;
    if (d2t_mr_parse(schema, text, &mr) != D2T_STATUS_OK) {
        fprintf(stderr, "error: %s\n", d2t_last_error());
        d2t_schema_free(schema);
        return 1;
    }
    d2t_mr_linearize(mr, &flat);
    printf("%s\n", flat);
    d2t_string_free(flat);
    d2t_mr_free(mr);
    d2t_schema_free(schema);
    return 0;
}
