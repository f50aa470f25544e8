use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SubwordError, BYTE_BASE, CONTROL_IDS, MIN_TARGET_SIZE, RESERVED};

const HEADER_TAG: &str = "d2t-subword";
const FORMAT_VERSION: u32 = 1;

/// Vocabulary ids of one encoded text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordModel {
    target_size: usize,
    merges: Vec<(u32, u32)>,
    /// Bytes spelled by each id; empty for reserved ids.
    pieces: Vec<Vec<u8>>,
    ranks: HashMap<(u32, u32), u32>,
}

impl SubwordModel {
    pub(crate) fn from_merges(target_size: usize, merges: Vec<(u32, u32)>) -> Self {
        let mut pieces: Vec<Vec<u8>> = vec![Vec::new(); RESERVED.len()];
        pieces.extend((0..=255u8).map(|b| vec![b]));
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let mut bytes = pieces[a as usize].clone();
            bytes.extend_from_slice(&pieces[b as usize]);
            pieces.push(bytes);
            ranks.insert((a, b), rank as u32);
        }
        SubwordModel {
            target_size,
            merges,
            pieces,
            ranks,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len()
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Bytes spelled by `id` (empty for reserved ids).
    pub fn piece(&self, id: u32) -> Option<&[u8]> {
        self.pieces.get(id as usize).map(Vec::as_slice)
    }

    /// Readable form of a token, for debugging and the vocabulary dump.
    pub fn token_text(&self, id: u32) -> String {
        match RESERVED.get(id as usize) {
            Some(r) => (*r).to_string(),
            None => match self.piece(id) {
                Some(bytes) => String::from_utf8_lossy(bytes).replace(' ', "▁"),
                None => format!("<{id}?>"),
            },
        }
    }

    pub fn reserved_id(token: &str) -> Option<u32> {
        RESERVED.iter().position(|r| *r == token).map(|i| i as u32)
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::with_capacity(text.len() / 2 + 2);
        let padded = format!(" {text}");
        for piece in split_pieces(&padded) {
            if let Some(control) = piece.strip_prefix(' ').and_then(control_id) {
                ids.push(control);
                continue;
            }
            self.encode_piece(piece.as_bytes(), &mut ids);
        }
        TokenSequence(ids)
    }

    fn encode_piece(&self, bytes: &[u8], out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = bytes.iter().map(|&b| BYTE_BASE + b as u32).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0], w[1])).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = self.merges[rank as usize];
            let merged = BYTE_BASE + 256 + rank;
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = next;
        }
        out.extend(symbols);
    }

    pub fn decode(&self, seq: &TokenSequence) -> Result<String, SubwordError> {
        self.decode_ids(seq.ids())
    }

    /// Inverse of [`SubwordModel::encode`]. Pad, bos, eos and mask spell
    /// nothing; invalid UTF-8 (possible only for model output) is replaced.
    pub fn decode_ids(&self, ids: &[u32]) -> Result<String, SubwordError> {
        let mut bytes = Vec::with_capacity(ids.len() * 4);
        for &id in ids {
            let idx = id as usize;
            if idx >= self.pieces.len() {
                return Err(SubwordError::IdOutOfRange {
                    id,
                    size: self.pieces.len(),
                });
            }
            if CONTROL_IDS.contains(&id) {
                bytes.push(b' ');
                bytes.extend_from_slice(RESERVED[idx].as_bytes());
            } else {
                bytes.extend_from_slice(&self.pieces[idx]);
            }
        }
        let text = String::from_utf8_lossy(&bytes);
        Ok(text.strip_prefix(' ').unwrap_or(&text).to_string())
    }

    /// Model file: a tab-separated header, then one merge per line as the
    /// hex bytes of its left and right parts.
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG}\tv{FORMAT_VERSION}\ttarget_size={}\treserved={}\n",
            self.target_size,
            RESERVED.join(" ")
        );
        for &(a, b) in &self.merges {
            let _ = writeln!(
                out,
                "{} {}",
                hex(&self.pieces[a as usize]),
                hex(&self.pieces[b as usize])
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SubwordError> {
        let bad = |line: usize, msg: &str| SubwordError::Format {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 4 || fields[0] != HEADER_TAG {
            return Err(bad(1, "not a subword model file"));
        }
        if fields[1] != format!("v{FORMAT_VERSION}") {
            return Err(bad(1, "unsupported format version"));
        }
        let target_size: usize = fields[2]
            .strip_prefix("target_size=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "bad target_size"))?;
        if target_size < MIN_TARGET_SIZE {
            return Err(bad(1, "target_size below minimum"));
        }
        let reserved: Vec<&str> = fields[3]
            .strip_prefix("reserved=")
            .ok_or_else(|| bad(1, "missing reserved tokens"))?
            .split(' ')
            .collect();
        if reserved != RESERVED {
            return Err(bad(1, "reserved tokens differ from this build"));
        }

        let mut by_bytes: HashMap<Vec<u8>, u32> = (0..=255u8)
            .map(|b| (vec![b], BYTE_BASE + b as u32))
            .collect();
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (l, r) = line.split_once(' ').ok_or_else(|| bad(lineno, "expected two parts"))?;
            let lb = unhex(l).ok_or_else(|| bad(lineno, "bad hex"))?;
            let rb = unhex(r).ok_or_else(|| bad(lineno, "bad hex"))?;
            let a = *by_bytes.get(&lb).ok_or_else(|| bad(lineno, "unknown left part"))?;
            let b = *by_bytes.get(&rb).ok_or_else(|| bad(lineno, "unknown right part"))?;
            let mut joined = lb;
            joined.extend_from_slice(&rb);
            let id = BYTE_BASE + 256 + merges.len() as u32;
            if by_bytes.insert(joined, id).is_some() {
                return Err(bad(lineno, "duplicate merge"));
            }
            merges.push((a, b));
        }
        let model = Self::from_merges(target_size, merges);
        if model.vocab_size() > target_size {
            return Err(bad(1, "more merges than target_size allows"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SubwordError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SubwordError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Short hex digest of the model file; checkpoints record it.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        hex(&digest[..8])
    }
}

fn control_id(word: &str) -> Option<u32> {
    CONTROL_IDS
        .iter()
        .copied()
        .find(|&id| RESERVED[id as usize] == word)
}

/// Cut text into merge domains (see the module docs).
pub(crate) fn split_pieces(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            let next = i + c.len_utf8();
            let word_follows = c == ' '
                && text[next..]
                    .chars()
                    .next()
                    .is_some_and(|d| !d.is_whitespace());
            if !word_follows {
                pieces.push(&text[i..next]);
                i = next;
                continue;
            }
        }
        // One optional space plus a run of non-whitespace.
        let start = i;
        if bytes[i] == b' ' {
            i += 1;
        }
        while i < text.len() {
            let d = text[i..].chars().next().unwrap();
            if d.is_whitespace() {
                break;
            }
            i += d.len_utf8();
        }
        pieces.push(&text[start..i]);
    }
    pieces
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 || s.is_empty() {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subword::{GENERATE_ID, TO_CS_ID};

    #[test]
    fn pieces_keep_every_byte() {
        let text = "  ahoj  světe\n\tx ";
        let pieces = split_pieces(text);
        assert_eq!(pieces.concat(), text);
        assert_eq!(pieces, vec![" ", " ahoj", " ", " světe", "\n", "\t", "x", " "]);
    }

    #[test]
    fn byte_only_model_round_trips() {
        let model = SubwordModel::from_merges(MIN_TARGET_SIZE, vec![]);
        for s in ["", " ", "Kočár z Vídně", "a\u{0}b", "  lead", "trail  ", "\n"] {
            assert_eq!(model.decode(&model.encode(s)).unwrap(), s);
        }
    }

    #[test]
    fn control_tokens_are_single_ids() {
        let model = SubwordModel::from_merges(MIN_TARGET_SIZE, vec![]);
        let seq = model.encode("[GENERATE] <2cs> inform");
        assert_eq!(&seq.ids()[..2], &[GENERATE_ID, TO_CS_ID]);
        // Not whitespace-delimited: spelled out in bytes.
        let seq = model.encode("x[GENERATE]");
        assert!(!seq.ids().contains(&GENERATE_ID));
        assert_eq!(model.decode(&seq).unwrap(), "x[GENERATE]");
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let model = SubwordModel::from_merges(MIN_TARGET_SIZE, vec![]);
        let too_big = model.vocab_size() as u32;
        assert!(matches!(
            model.decode_ids(&[too_big]),
            Err(SubwordError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn file_format_errors() {
        assert!(SubwordModel::parse("").is_err());
        assert!(SubwordModel::parse("d2t-subword\tv9\ttarget_size=300\treserved=x\n").is_err());
        let ok = SubwordModel::from_merges(MIN_TARGET_SIZE, vec![]).to_file_string();
        let bad = format!("{ok}zz 61\n");
        assert!(matches!(
            SubwordModel::parse(&bad),
            Err(SubwordError::Format { line: 2, .. })
        ));
    }
}
