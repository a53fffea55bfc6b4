//! Vocabulary and bag-of-words corpus loading, holdout splits and the
//! minibatch orderings used by each streaming scenario.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if let Some(&first) = index.get(tok) {
                return Err(Error::DuplicateToken {
                    token: tok.clone(),
                    first: first as usize,
                    second: i,
                });
            }
            index.insert(tok.clone(), i as u32);
        }
        Ok(Self { tokens, index })
    }

    /// Placeholder vocabulary `w0 … w{V-1}`, used for synthetic corpora.
    pub fn synthetic(size: usize) -> Self {
        Self::new((0..size).map(|i| format!("w{i}")).collect()).expect("non-empty, distinct")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// One token per line; ids are 0-based line numbers.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = text.strip_suffix('\n').unwrap_or(&text);
    if body.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut tokens = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let tok = line.strip_suffix('\r').unwrap_or(line);
        if tok.is_empty() {
            return Err(Error::parse(path, i, "blank line in vocabulary"));
        }
        tokens.push(tok.to_owned());
    }
    Vocabulary::new(tokens)
}

/// Sparse bag of words. Entries are sorted by term id with distinct ids and
/// positive counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    entries: Vec<(u32, u32)>,
    pub label: Option<String>,
    pub timestamp: Option<i64>,
}

impl Document {
    /// Builds a document from `(term, count)` pairs, merging repeated terms.
    pub fn from_counts(pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut merged: BTreeMap<u32, u32> = BTreeMap::new();
        for (term, count) in pairs {
            if count == 0 {
                return Err(Error::Invalid(format!("zero count for term {term}")));
            }
            *merged.entry(term).or_insert(0) += count;
        }
        if merged.is_empty() {
            return Err(Error::Invalid("document has no tokens".into()));
        }
        Ok(Self {
            entries: merged.into_iter().collect(),
            label: None,
            timestamp: None,
        })
    }

    /// Builds a document from a token sequence.
    pub fn from_tokens(tokens: impl IntoIterator<Item = u32>) -> Result<Self> {
        Self::from_counts(tokens.into_iter().map(|t| (t, 1)))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_timestamp(mut self, ts: i64) -> Self {
        self.timestamp = Some(ts);
        self
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn count(&self, term: u32) -> u32 {
        self.entries
            .binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// N_d, the number of tokens.
    pub fn len(&self) -> u32 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_term(&self) -> u32 {
        self.entries.last().map(|&(t, _)| t).unwrap_or(0)
    }

    /// Token multiset expanded in term-id order.
    pub fn tokens(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries
            .iter()
            .flat_map(|&(t, c)| std::iter::repeat_n(t, c as usize))
    }
}

/// Parses the tab-separated corpus format
/// `label<TAB>timestamp<TAB>id:count[ id:count]*`, `-` marking an absent field.
pub fn load_corpus(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        docs.push(parse_corpus_line(raw, vocab.len()).map_err(|msg| Error::parse(path, i, msg))?);
    }
    Ok(docs)
}

fn parse_corpus_line(line: &str, vocab_size: usize) -> std::result::Result<Document, String> {
    let mut fields = line.splitn(3, '\t');
    let label = fields.next().ok_or("missing label field")?;
    let ts = fields.next().ok_or("missing timestamp field")?;
    let body = fields.next().ok_or("missing counts field")?;

    let mut pairs = Vec::new();
    for pair in body.split_whitespace() {
        let (id, count) = pair
            .split_once(':')
            .ok_or_else(|| format!("malformed pair {pair:?}"))?;
        let id: u64 = id
            .parse()
            .map_err(|_| format!("malformed term id in {pair:?}"))?;
        let count: i64 = count
            .parse()
            .map_err(|_| format!("malformed count in {pair:?}"))?;
        if id >= vocab_size as u64 {
            return Err(format!("term id {id} out of range (V={vocab_size})"));
        }
        if count <= 0 {
            return Err(format!("non-positive count {count} for term {id}"));
        }
        let count = u32::try_from(count).map_err(|_| format!("count {count} too large"))?;
        pairs.push((id as u32, count));
    }
    let mut doc = Document::from_counts(pairs).map_err(|e| e.to_string())?;
    if label != "-" {
        doc.label = Some(label.to_owned());
    }
    if ts != "-" {
        doc.timestamp = Some(ts.parse().map_err(|_| format!("malformed timestamp {ts:?}"))?);
    }
    Ok(doc)
}

/// Serializes a document back into the corpus line format.
pub fn format_corpus_line(doc: &Document) -> String {
    let label = doc.label.as_deref().unwrap_or("-");
    let ts = doc
        .timestamp
        .map(|t| t.to_string())
        .unwrap_or_else(|| "-".into());
    let body: Vec<String> = doc.entries.iter().map(|(t, c)| format!("{t}:{c}")).collect();
    format!("{label}\t{ts}\t{}", body.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub obs: Document,
    pub ho: Document,
}

/// Smallest document length a holdout split accepts.
pub const MIN_SPLIT_LEN: u32 = 5;

/// Randomly partitions the token multiset of `doc` into an observed part of
/// `round(ratio * N_d)` tokens and a held-out remainder.
pub fn split_holdout<R: Rng + ?Sized>(doc: &Document, ratio: f64, rng: &mut R) -> Result<HoldoutSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!("split ratio must lie in (0,1), got {ratio}")));
    }
    let n = doc.len();
    if n < MIN_SPLIT_LEN {
        return Err(Error::Invalid(format!(
            "document has {n} tokens, holdout split needs at least {MIN_SPLIT_LEN}"
        )));
    }
    let mut tokens: Vec<u32> = doc.tokens().collect();
    tokens.shuffle(rng);
    // half-up rounding, then keep both sides non-empty
    let n_obs = ((ratio * n as f64) + 0.5).floor() as usize;
    let n_obs = n_obs.clamp(1, n as usize - 1);
    let (obs, ho) = tokens.split_at(n_obs);
    let mut obs = Document::from_tokens(obs.iter().copied())?;
    let mut ho = Document::from_tokens(ho.iter().copied())?;
    obs.label.clone_from(&doc.label);
    obs.timestamp = doc.timestamp;
    ho.label.clone_from(&doc.label);
    ho.timestamp = doc.timestamp;
    Ok(HoldoutSplit { obs, ho })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minibatch {
    pub index: usize,
    pub docs: Vec<Document>,
}

impl Minibatch {
    pub fn num_tokens(&self) -> u64 {
        self.docs.iter().map(|d| d.len() as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

fn chunk_into(out: &mut Vec<Minibatch>, docs: &[Document], batch_size: usize) {
    for chunk in docs.chunks(batch_size) {
        let index = out.len();
        out.push(Minibatch {
            index,
            docs: chunk.to_vec(),
        });
    }
}

/// Uniform shuffle followed by contiguous chunks; the last chunk may be short.
pub fn stream_fixed<R: Rng + ?Sized>(docs: &[Document], batch_size: usize, rng: &mut R) -> Result<Vec<Minibatch>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let mut shuffled = docs.to_vec();
    shuffled.shuffle(rng);
    let mut out = Vec::new();
    chunk_into(&mut out, &shuffled, batch_size);
    Ok(out)
}

/// One minibatch per distinct timestamp, ascending, file order within.
pub fn stream_timestamp(docs: &[Document]) -> Result<Vec<Minibatch>> {
    let mut groups: BTreeMap<i64, Vec<Document>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        let ts = d
            .timestamp
            .ok_or_else(|| Error::Invalid(format!("document {i} has no timestamp")))?;
        groups.entry(ts).or_default().push(d.clone());
    }
    Ok(groups
        .into_values()
        .enumerate()
        .map(|(index, docs)| Minibatch { index, docs })
        .collect())
}

/// Classes streamed one after another in `label_order`, each chunked at
/// `batch_size`. Minibatch indices run globally.
pub fn stream_by_label(docs: &[Document], label_order: &[String], batch_size: usize) -> Result<Vec<Minibatch>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let mut groups: Vec<Vec<Document>> = vec![Vec::new(); label_order.len()];
    for (i, d) in docs.iter().enumerate() {
        let label = d
            .label
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("document {i} has no label")))?;
        let slot = label_order
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Invalid(format!("label {label:?} not in label order")))?;
        groups[slot].push(d.clone());
    }
    let mut out = Vec::new();
    for group in &groups {
        chunk_into(&mut out, group, batch_size);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn docs_with_labels(labels: &[&str]) -> Vec<Document> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| Document::from_counts([(i as u32, 1)]).unwrap().with_label(*l))
            .collect()
    }

    #[test]
    fn vocabulary_ids_follow_lines() {
        let f = write_tmp("apple\nball\n");
        let v = load_vocabulary(f.path()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("apple"), Some(0));
        assert_eq!(v.id("ball"), Some(1));
        assert_eq!(v.token(1), Some("ball"));
    }

    #[test]
    fn vocabulary_duplicate_names_both_lines() {
        let f = write_tmp("a\na\n");
        match load_vocabulary(f.path()) {
            Err(Error::DuplicateToken { token, first, second }) => {
                assert_eq!((token.as_str(), first, second), ("a", 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vocabulary_empty_rejected() {
        let f = write_tmp("");
        assert!(matches!(load_vocabulary(f.path()), Err(Error::EmptyVocabulary)));
        let f = write_tmp("a\n\nb\n");
        assert!(load_vocabulary(f.path()).is_err());
    }

    #[test]
    fn corpus_lines_parse() {
        let vocab = Vocabulary::synthetic(5);
        let f = write_tmp("news\t200501\t0:2 3:1\n-\t-\t1:1\n");
        let docs = load_corpus(f.path(), &vocab).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].entries(), &[(0, 2), (3, 1)]);
        assert_eq!(docs[0].label.as_deref(), Some("news"));
        assert_eq!(docs[0].timestamp, Some(200501));
        assert_eq!(docs[0].len(), 3);
        assert_eq!(docs[1].entries(), &[(1, 1)]);
        assert_eq!(docs[1].label, None);
        assert_eq!(docs[1].timestamp, None);
    }

    #[test]
    fn corpus_errors_carry_line() {
        let vocab = Vocabulary::synthetic(5);
        for bad in ["-\t-\t9:1\n", "-\t-\t1:0\n", "-\t-\t1:-2\n", "-\t-\t1-2\n", "-\t-\t\n", "-\tx\t1:1\n"] {
            let f = write_tmp(&format!("-\t-\t0:1\n{bad}"));
            match load_corpus(f.path(), &vocab) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 1, "{bad:?}"),
                other => panic!("{bad:?}: unexpected {other:?}"),
            }
        }
        let f = write_tmp("-\t-\t9:1\n");
        let msg = load_corpus(f.path(), &vocab).unwrap_err().to_string();
        assert!(msg.contains("term id 9 out of range"), "{msg}");
    }

    #[test]
    fn corpus_line_round_trip() {
        let d = Document::from_counts([(3, 1), (0, 2)]).unwrap().with_label("x").with_timestamp(7);
        assert_eq!(format_corpus_line(&d), "x\t7\t0:2 3:1");
        assert_eq!(parse_corpus_line(&format_corpus_line(&d), 4).unwrap(), d);
    }

    #[test]
    fn split_single_term_forced() {
        let doc = Document::from_counts([(0, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = split_holdout(&doc, 0.8, &mut rng).unwrap();
        assert_eq!(s.obs.entries(), &[(0, 4)]);
        assert_eq!(s.ho.entries(), &[(0, 1)]);
    }

    #[test]
    fn split_mixed_document_conserves_tokens() {
        let doc = Document::from_counts([(0, 2), (1, 2), (2, 1)]).unwrap();
        // Oracle: every 4/1 partition of the multiset {0,0,1,1,2} leaves a
        // single held-out token whose term is one of the document's terms.
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = split_holdout(&doc, 0.8, &mut rng).unwrap();
            assert_eq!(s.obs.len(), 4);
            assert_eq!(s.ho.len(), 1);
            for v in 0..3 {
                assert_eq!(s.obs.count(v) + s.ho.count(v), doc.count(v));
            }
        }
    }

    #[test]
    fn split_short_document_rejected() {
        let doc = Document::from_counts([(0, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(split_holdout(&doc, 0.8, &mut rng).is_err());
    }

    #[test]
    fn split_keeps_holdout_nonempty() {
        let doc = Document::from_counts([(0, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = split_holdout(&doc, 0.95, &mut rng).unwrap();
        assert_eq!((s.obs.len(), s.ho.len()), (4, 1));
    }

    #[test]
    fn fixed_stream_sizes() {
        let docs = docs_with_labels(&["a"; 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = stream_fixed(&docs, 4, &mut rng).unwrap();
        let sizes: Vec<usize> = s.iter().map(Minibatch::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(s.iter().map(|m| m.index).collect::<Vec<_>>(), vec![0, 1, 2]);

        let s = stream_fixed(&docs[..4], 4, &mut rng).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].index, 0);

        assert!(stream_fixed(&[], 4, &mut rng).unwrap().is_empty());
        assert!(stream_fixed(&docs, 0, &mut rng).is_err());
    }

    #[test]
    fn fixed_stream_is_seeded() {
        let docs = docs_with_labels(&["a"; 17]);
        let a = stream_fixed(&docs, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = stream_fixed(&docs, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timestamp_stream_groups() {
        let mk = |ts| Document::from_counts([(0, 1)]).unwrap().with_timestamp(ts);
        let s = stream_timestamp(&[mk(200502), mk(200501), mk(200501)]).unwrap();
        assert_eq!(s.iter().map(Minibatch::len).collect::<Vec<_>>(), vec![2, 1]);
        assert_eq!(s[0].docs[0].timestamp, Some(200501));

        let s = stream_timestamp(&[mk(3), mk(3)]).unwrap();
        assert_eq!(s.len(), 1);

        let missing = [mk(1), Document::from_counts([(0, 1)]).unwrap()];
        assert!(stream_timestamp(&missing).is_err());
    }

    #[test]
    fn label_stream_orders_classes() {
        let docs = docs_with_labels(&["a", "b", "a", "b", "a"]);
        let order = vec!["a".to_string(), "b".to_string()];
        let s = stream_by_label(&docs, &order, 2).unwrap();
        assert_eq!(s.iter().map(Minibatch::len).collect::<Vec<_>>(), vec![2, 1, 2]);
        let labels: Vec<&str> = s.iter().map(|m| m.docs[0].label.as_deref().unwrap()).collect();
        assert_eq!(labels, vec!["a", "a", "b"]);
        assert_eq!(s.iter().map(|m| m.index).collect::<Vec<_>>(), vec![0, 1, 2]);

        let rev = vec!["b".to_string(), "a".to_string()];
        let s = stream_by_label(&docs, &rev, 2).unwrap();
        assert_eq!(s[0].docs[0].label.as_deref(), Some("b"));

        let docs = docs_with_labels(&["a", "c"]);
        let err = stream_by_label(&docs, &order, 2).unwrap_err().to_string();
        assert!(err.contains("\"c\""), "{err}");
    }
}
