use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use super::tokenizer::{default_spacing, split_pieces, Piece};
use super::{
    CorpusError, Origin, Result, Token, TokenSequence, COL_ID, COL_SURFACE, DEFAULT_MAX_BYTES,
    DEFAULT_MAX_TOKENS, RESERVED, SPECIAL_SURFACES, TBL_ID, TBL_SURFACE, UNK_ID,
};

pub const DEFAULT_NGRAM_THRESHOLD: usize = 5;
const VOCAB_HEADER: &str = "FUZZVOCAB v1";

/// Bijective surface/id map. Ids `0..RESERVED` hold the special tokens, then
/// base tokens, then mined n-grams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    surfaces: Vec<String>,
    index: HashMap<String, u32>,
    /// For n-gram entries, the base ids they decompose into.
    components: Vec<Option<Vec<u32>>>,
    max_bytes: usize,
    max_tokens: usize,
}

/// Builds a vocabulary from payload texts. Base entries are every distinct
/// tokenizer piece; contiguous bigrams and trigrams seen at least
/// `ngram_threshold` times (with single spaces between their pieces) become
/// extra entries. `None` disables n-gram mining. Both groups are ordered by
/// frequency descending, then lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], ngram_threshold: Option<usize>) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut base: HashMap<String, usize> = HashMap::new();
    let mut grams: HashMap<Vec<String>, usize> = HashMap::new();
    for payload in corpus {
        let pieces = split_pieces(payload.as_ref());
        for p in &pieces {
            if SPECIAL_SURFACES[..3].contains(&p.surface.as_str()) {
                continue;
            }
            *base.entry(p.surface.clone()).or_default() += 1;
        }
        for n in 2..=3 {
            for w in pieces.windows(n) {
                let special = w.iter().any(|p| SPECIAL_SURFACES[..3].contains(&p.surface.as_str()));
                if !special && w[1..].iter().all(|p| p.spaced) {
                    let key: Vec<String> = w.iter().map(|p| p.surface.clone()).collect();
                    *grams.entry(key).or_default() += 1;
                }
            }
        }
    }
    let mut base: Vec<(String, usize)> = base
        .into_iter()
        .filter(|(s, _)| s != COL_SURFACE && s != TBL_SURFACE)
        .collect();
    base.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut vocab = Vocab::with_specials();
    for (surface, _) in base {
        vocab.push(surface, None);
    }
    if let Some(threshold) = ngram_threshold {
        let mut mined: Vec<(String, Vec<String>, usize)> = grams
            .into_iter()
            .filter(|(_, c)| *c >= threshold.max(1))
            .map(|(parts, c)| (parts.join(" "), parts, c))
            .collect();
        mined.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        for (surface, parts, _) in mined {
            let ids = parts.iter().map(|p| vocab.id_of(p).expect("base piece")).collect();
            vocab.push(surface, Some(ids));
        }
    }
    Ok(vocab)
}

/// Parses seed file contents: one payload per line. Blank lines and comment
/// lines (`#` alone or followed by a space) are skipped.
pub fn parse_seed_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && *l != "#" && !l.starts_with("# "))
        .map(str::to_string)
        .collect()
}

pub fn read_seed_file(path: &Path) -> Result<Vec<String>> {
    Ok(parse_seed_lines(&std::fs::read_to_string(path)?))
}

impl Vocab {
    fn with_specials() -> Self {
        let mut v = Vocab {
            surfaces: Vec::new(),
            index: HashMap::new(),
            components: Vec::new(),
            max_bytes: DEFAULT_MAX_BYTES,
            max_tokens: DEFAULT_MAX_TOKENS,
        };
        for s in SPECIAL_SURFACES {
            v.push(s.to_string(), None);
        }
        v
    }

    fn push(&mut self, surface: String, components: Option<Vec<u32>>) {
        let id = self.surfaces.len() as u32;
        self.index.insert(surface.clone(), id);
        self.surfaces.push(surface);
        self.components.push(components);
    }

    /// Overrides the byte cap and token limit enforced by [`Vocab::tokenize`].
    pub fn with_limits(mut self, max_bytes: usize, max_tokens: usize) -> Self {
        self.max_bytes = max_bytes;
        self.max_tokens = max_tokens;
        self
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: u32) -> &str {
        &self.surfaces[id as usize]
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn is_ngram(&self, id: u32) -> bool {
        self.components[id as usize].is_some()
    }

    pub fn components(&self, id: u32) -> Option<&[u32]> {
        self.components[id as usize].as_deref()
    }

    pub fn ngram_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len() as u32).filter(|&id| self.is_ngram(id))
    }

    /// Id for a tokenizer piece: reserved placeholders map to their fixed
    /// ids, other special surfaces and unseen fragments map to UNK.
    pub fn lookup_piece(&self, surface: &str) -> u32 {
        match surface {
            COL_SURFACE => COL_ID,
            TBL_SURFACE => TBL_ID,
            s if SPECIAL_SURFACES.contains(&s) => UNK_ID,
            s => match self.index.get(s) {
                Some(&id) if !self.is_ngram(id) => id,
                _ => UNK_ID,
            },
        }
    }

    /// Tokenizes raw payload text into base tokens.
    pub fn tokenize(&self, raw: &str) -> Result<TokenSequence> {
        if raw.len() > self.max_bytes {
            return Err(CorpusError::InputTooLong { len: raw.len(), cap: self.max_bytes });
        }
        let pieces = split_pieces(raw);
        if pieces.len() > self.max_tokens {
            return Err(CorpusError::TooManyTokens { len: pieces.len(), max: self.max_tokens });
        }
        self.from_pieces(&pieces, Origin::Seed)
    }

    pub fn from_pieces(&self, pieces: &[Piece], origin: Origin) -> Result<TokenSequence> {
        let tokens = pieces
            .iter()
            .map(|p| Token { id: self.lookup_piece(&p.surface), surface: p.surface.clone(), spaced: p.spaced })
            .collect();
        TokenSequence::new(tokens, origin)
    }

    /// Builds a sequence from bare surfaces using [`default_spacing`].
    pub fn from_surfaces<S: AsRef<str>>(&self, surfaces: &[S], origin: Origin) -> Result<TokenSequence> {
        let mut pieces: Vec<Piece> = Vec::with_capacity(surfaces.len());
        for s in surfaces {
            let prev = pieces.last().map(|p| p.surface.as_str());
            let spaced = default_spacing(prev, s.as_ref());
            pieces.push(Piece::new(s.as_ref(), spaced));
        }
        self.from_pieces(&pieces, origin)
    }

    /// A token carrying `id`, spaced relative to `prev`.
    pub fn token(&self, id: u32, prev: Option<&str>) -> Token {
        let surface = self.surface(id).to_string();
        let spaced = default_spacing(prev, &surface);
        Token { id, surface, spaced }
    }

    /// Replaces runs of base tokens by n-gram entries, choosing the
    /// segmentation with the fewest tokens and, among those, the most
    /// frequent n-grams (lowest summed frequency rank). Only runs whose inner
    /// tokens are space-separated are merged so rendering is unchanged.
    pub fn merge_ngrams(&self, seq: &TokenSequence) -> TokenSequence {
        let toks = seq.tokens();
        let n = toks.len();
        let first_gram = self.ngram_ids().next().unwrap_or(u32::MAX);
        // best[i]: (tokens, rank sum, span, n-gram id) for the suffix from i
        let mut best: Vec<(usize, u64, usize, Option<u32>)> = vec![(0, 0, 0, None); n + 1];
        for i in (0..n).rev() {
            let (t, r, _, _) = best[i + 1];
            let mut pick = (t + 1, r, 1, None);
            for span in 2..=3 {
                if i + span > n || !toks[i + 1..i + span].iter().all(|t| t.spaced) {
                    continue;
                }
                let surface = toks[i..i + span].iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ");
                let Some(&id) = self.index.get(&surface) else { continue };
                if !self.is_ngram(id) {
                    continue;
                }
                let (t, r, _, _) = best[i + span];
                let cand = (t + 1, r + u64::from(id - first_gram) + 1, span, Some(id));
                if (cand.0, cand.1) < (pick.0, pick.1) {
                    pick = cand;
                }
            }
            best[i] = pick;
        }
        let mut out = Vec::with_capacity(best[0].0);
        let mut i = 0;
        while i < n {
            let (_, _, span, id) = best[i];
            match id {
                Some(id) => {
                    let surface = self.surface(id).to_string();
                    out.push(Token { id, surface, spaced: toks[i].spaced });
                }
                None => out.push(toks[i].clone()),
            }
            i += span;
        }
        TokenSequence { tokens: out, origin: seq.origin }
    }

    /// Splits n-gram tokens back into their base tokens.
    pub fn expand(&self, seq: &TokenSequence) -> TokenSequence {
        let mut out = Vec::with_capacity(seq.len());
        for t in seq.tokens() {
            match self.components(t.id) {
                Some(parts) => {
                    for (k, &id) in parts.iter().enumerate() {
                        out.push(Token {
                            id,
                            surface: self.surface(id).to_string(),
                            spaced: if k == 0 { t.spaced } else { true },
                        });
                    }
                }
                None => out.push(t.clone()),
            }
        }
        TokenSequence { tokens: out, origin: seq.origin }
    }

    /// Retokenizes the rendered text of `seq` and merges n-grams: the
    /// canonical state form of any candidate.
    pub fn canonicalize(&self, seq: &TokenSequence) -> TokenSequence {
        let pieces = split_pieces(&seq.detokenize());
        match self.from_pieces(&pieces, seq.origin) {
            Ok(base) => self.merge_ngrams(&base),
            Err(_) => seq.clone(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{VOCAB_HEADER}")?;
        for (id, s) in self.surfaces.iter().enumerate() {
            writeln!(w, "{id}\t{s}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == VOCAB_HEADER => {}
            Some(h) => return Err(CorpusError::VocabFormat(format!("unsupported header {h:?}"))),
            None => return Err(CorpusError::VocabFormat("empty file".into())),
        }
        let mut rows = BTreeMap::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (id, surface) = line
                .split_once('\t')
                .ok_or_else(|| CorpusError::VocabFormat(format!("bad row {line:?}")))?;
            let id: usize = id.parse().map_err(|_| CorpusError::VocabFormat(format!("bad id {id:?}")))?;
            rows.insert(id, surface.to_string());
        }
        if rows.keys().copied().ne(0..rows.len()) || rows.len() < RESERVED {
            return Err(CorpusError::VocabFormat("ids must be contiguous from 0".into()));
        }
        let mut v = Vocab::with_specials();
        for (id, surface) in rows {
            if id < RESERVED {
                if surface != SPECIAL_SURFACES[id] {
                    return Err(CorpusError::VocabFormat(format!("reserved id {id} is {surface:?}")));
                }
                continue;
            }
            let components = if surface.contains(' ') {
                let ids = surface
                    .split(' ')
                    .map(|p| v.id_of(p).ok_or_else(|| CorpusError::VocabFormat(format!("n-gram part {p:?} unknown"))))
                    .collect::<Result<Vec<_>>>()?;
                Some(ids)
            } else {
                None
            };
            if v.index.contains_key(&surface) {
                return Err(CorpusError::VocabFormat(format!("duplicate surface {surface:?}")));
            }
            v.push(surface, components);
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<String> {
        let mut c: Vec<String> = (0..10).map(|i| format!("IF ('a' = 'a') THEN sleep({i})")).collect();
        c.push("' OR 1 = 1 ; --".into());
        c
    }

    #[test]
    fn mines_frequent_ngrams() {
        let v = build_vocab(&fixture(), Some(5)).unwrap();
        let id = v.id_of("'a' =").expect("bigram mined");
        assert!(v.is_ngram(id));
        assert!(v.id_of("'a' = 'a'").is_some());
        assert!(v.id_of("1 = 1").is_none(), "only one occurrence");
    }

    #[test]
    fn infinite_threshold_keeps_base_only() {
        let v = build_vocab(&fixture(), None).unwrap();
        assert_eq!(v.ngram_ids().count(), 0);
        let base = build_vocab(&fixture(), Some(usize::MAX)).unwrap();
        assert_eq!(v, base);
    }

    #[test]
    fn duplicated_corpus_matches_doubled_threshold() {
        let one = build_vocab(&fixture(), Some(3)).unwrap();
        let mut twice = fixture();
        twice.extend(fixture());
        assert_eq!(build_vocab(&twice, Some(6)).unwrap(), one);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(build_vocab::<String>(&[], Some(5)), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = build_vocab(&fixture(), Some(5)).unwrap();
        for (i, s) in SPECIAL_SURFACES.iter().enumerate() {
            assert_eq!(v.surface(i as u32), *s);
        }
        let seq = v.tokenize("SELECT [MASK] <TBL>").unwrap();
        assert_eq!(seq.ids(), [UNK_ID as usize, UNK_ID as usize, TBL_ID as usize]);
        assert_eq!(seq.detokenize(), "SELECT [MASK] <TBL>");
    }

    #[test]
    fn tokenize_errors() {
        let v = build_vocab(&fixture(), Some(5)).unwrap();
        assert!(matches!(v.tokenize(""), Err(CorpusError::InputTooShort)));
        assert!(matches!(v.tokenize("   "), Err(CorpusError::InputTooShort)));
        let v = v.with_limits(8, 64);
        assert!(matches!(v.tokenize("123456789"), Err(CorpusError::InputTooLong { len: 9, cap: 8 })));
    }

    #[test]
    fn merge_and_expand_are_inverse() {
        let v = build_vocab(&fixture(), Some(5)).unwrap();
        let base = v.tokenize("IF ('a' = 'a') THEN sleep(3)").unwrap();
        let merged = v.merge_ngrams(&base);
        assert!(merged.len() < base.len());
        assert_eq!(merged.detokenize(), base.detokenize());
        assert_eq!(v.expand(&merged), base);
    }

    #[test]
    fn file_round_trip() {
        let v = build_vocab(&fixture(), Some(5)).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("FUZZVOCAB v1\n0\t[PAD]\n"));
        assert_eq!(Vocab::parse(&text).unwrap(), v);
        assert!(Vocab::parse("FUZZVOCAB v0\n").is_err());
    }

    #[test]
    fn seed_lines_skip_comments() {
        let seeds = parse_seed_lines("# header\n' OR 1 = 1 --\n\n<script>x()</script>\n");
        assert_eq!(seeds, ["' OR 1 = 1 --", "<script>x()</script>"]);
    }
}
