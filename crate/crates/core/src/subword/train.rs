use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::model::{split_pieces, SubwordModel};
use super::{SubwordError, BYTE_BASE, CONTROL_IDS, MIN_TARGET_SIZE, RESERVED};

type Pair = (u32, u32);

/// Learn byte-pair merges until the vocabulary reaches `target_size` or no
/// pair occurs at least twice.
///
/// The most frequent pair is merged first; ties go to the pair whose
/// (left bytes, right bytes) sorts first. The result depends only on the
/// multiset of pieces in the corpus.
pub fn train_subword<I, S>(corpus: I, target_size: usize) -> Result<SubwordModel, SubwordError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if target_size < MIN_TARGET_SIZE {
        return Err(SubwordError::TargetTooSmall {
            got: target_size,
            min: MIN_TARGET_SIZE,
        });
    }
    let mut piece_counts: HashMap<String, i64> = HashMap::new();
    let mut lines = 0usize;
    for text in corpus {
        lines += 1;
        let padded = format!(" {}", text.as_ref());
        for piece in split_pieces(&padded) {
            let is_control = piece
                .strip_prefix(' ')
                .is_some_and(|w| CONTROL_IDS.iter().any(|&id| RESERVED[id as usize] == w));
            if !is_control {
                *piece_counts.entry(piece.to_string()).or_insert(0) += 1;
            }
        }
    }
    if lines == 0 {
        return Err(SubwordError::EmptyCorpus);
    }

    // Sorted so that training does not depend on hash order.
    let mut pieces: Vec<(String, i64)> = piece_counts.into_iter().collect();
    pieces.sort();
    let mut words: Vec<(Vec<u32>, i64)> = pieces
        .into_iter()
        .map(|(p, c)| (p.bytes().map(|b| BYTE_BASE + b as u32).collect(), c))
        .collect();

    let mut spelled: Vec<Vec<u8>> = vec![Vec::new(); RESERVED.len()];
    spelled.extend((0..=255u8).map(|b| vec![b]));

    let mut counts: HashMap<Pair, i64> = HashMap::new();
    let mut located: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (idx, (symbols, c)) in words.iter().enumerate() {
        for w in symbols.windows(2) {
            *counts.entry((w[0], w[1])).or_insert(0) += c;
            located.entry((w[0], w[1])).or_default().insert(idx);
        }
    }
    let mut heap = BinaryHeap::new();
    for (&pair, &c) in &counts {
        heap.push(entry(pair, c, &spelled));
    }

    let mut merges: Vec<Pair> = Vec::new();
    while spelled.len() < target_size {
        let Some((count, _, pair)) = heap.pop() else { break };
        if counts.get(&pair).copied().unwrap_or(0) != count {
            continue;
        }
        if count < 2 {
            break;
        }
        let new_id = spelled.len() as u32;
        let mut joined = spelled[pair.0 as usize].clone();
        joined.extend_from_slice(&spelled[pair.1 as usize]);
        spelled.push(joined);
        merges.push(pair);

        let mut touched: HashSet<Pair> = HashSet::new();
        let mut affected: Vec<usize> = located.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for idx in affected {
            let (symbols, c) = &mut words[idx];
            let c = *c;
            if !symbols.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            for w in symbols.windows(2) {
                let p = (w[0], w[1]);
                *counts.get_mut(&p).unwrap() -= c;
                touched.insert(p);
            }
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    next.push(new_id);
                    i += 2;
                } else {
                    next.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = next;
            for w in symbols.windows(2) {
                let p = (w[0], w[1]);
                *counts.entry(p).or_insert(0) += c;
                located.entry(p).or_default().insert(idx);
                touched.insert(p);
            }
        }
        counts.remove(&pair);
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            match counts.get(&p).copied() {
                Some(c) if c > 0 => heap.push(entry(p, c, &spelled)),
                _ => {
                    counts.remove(&p);
                }
            }
        }
    }
    Ok(SubwordModel::from_merges(target_size, merges))
}

fn entry(pair: Pair, count: i64, spelled: &[Vec<u8>]) -> (i64, Reverse<(Vec<u8>, Vec<u8>)>, Pair) {
    let key = (spelled[pair.0 as usize].clone(), spelled[pair.1 as usize].clone());
    (count, Reverse(key), pair)
}
