//! CoNLL-2012 column-format reading and writing.
//!
//! A file holds one or more documents, each bracketed by
//! `#begin document (<key>); part NNN` and `#end document`. Token rows are
//! whitespace-separated columns; sentences are separated by blank lines. The
//! reader consumes the document key, part, word index, word, speaker, and the
//! coreference column (always the last one); the writer emits the same
//! skeleton with every other column dashed.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::document::{mention_order_cmp, Clustering, Document, DocumentError, Span};

/// Default position of the speaker column in CoNLL-2012 rows.
pub const SPEAKER_COLUMN: usize = 9;

#[derive(Debug, Error)]
pub enum ConllError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: coreference bracket ({id} opened but never closed")]
    UnclosedBracket { line: usize, id: usize },
    #[error("line {line}: coreference bracket {id}) closed but never opened")]
    UnopenedBracket { line: usize, id: usize },
    #[error("line {line}: word index {got} out of order, expected {expected}")]
    NonContiguous {
        line: usize,
        got: usize,
        expected: usize,
    },
    #[error("missing #end document marker for {key:?}")]
    MissingEnd { key: String },
    #[error("document {key:?} is empty")]
    EmptyDocument { key: String },
    #[error("invalid document: {0}")]
    Document(#[from] DocumentError),
}

fn syntax(line: usize, message: impl Into<String>) -> ConllError {
    ConllError::Syntax {
        line,
        message: message.into(),
    }
}

/// One gold document: text, clustering, and the part number it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub document: Document,
    pub gold: Clustering,
    pub part: u32,
}

impl CorpusEntry {
    /// Unique key across multi-part documents: `(<key>); part N`.
    pub fn full_key(&self) -> String {
        format!("({}); part {}", self.document.doc_key(), self.part)
    }
}

/// Reader configuration; only the speaker column placement varies across
/// corpus exports.
#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    pub speaker_column: usize,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            speaker_column: SPEAKER_COLUMN,
        }
    }
}

/// Clusters of size two or more, order preserved.
pub fn filter_singletons(clustering: &Clustering) -> Clustering {
    clustering.without_singletons()
}

struct DocumentBuilder {
    key: String,
    part: u32,
    words: Vec<String>,
    sentence_ends: Vec<usize>,
    speakers: Vec<String>,
    // Per-cluster-id stack of open positions, for nested same-id mentions.
    open: Vec<(usize, Vec<usize>)>,
    mentions: Vec<(usize, Span)>,
    sentence_words: usize,
    sentence_speaker: Option<String>,
}

impl DocumentBuilder {
    fn new(key: String, part: u32) -> Self {
        DocumentBuilder {
            key,
            part,
            words: Vec::new(),
            sentence_ends: Vec::new(),
            speakers: Vec::new(),
            open: Vec::new(),
            mentions: Vec::new(),
            sentence_words: 0,
            sentence_speaker: None,
        }
    }

    fn stack(&mut self, id: usize) -> &mut Vec<usize> {
        if let Some(pos) = self.open.iter().position(|(k, _)| *k == id) {
            &mut self.open[pos].1
        } else {
            self.open.push((id, Vec::new()));
            &mut self.open.last_mut().unwrap().1
        }
    }

    fn row(&mut self, line: usize, columns: &[&str], opts: &ReadOptions) -> Result<(), ConllError> {
        if columns.len() < 5 {
            return Err(syntax(
                line,
                format!("expected at least 5 columns, got {}", columns.len()),
            ));
        }
        let index: usize = columns[2]
            .parse()
            .map_err(|_| syntax(line, format!("bad word index {:?}", columns[2])))?;
        if index != self.sentence_words {
            return Err(ConllError::NonContiguous {
                line,
                got: index,
                expected: self.sentence_words,
            });
        }
        let word = columns[3];
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(syntax(line, format!("bad word {word:?}")));
        }

        self.words.push(word.to_string());
        self.sentence_words += 1;
        if self.sentence_speaker.is_none() {
            let speaker = columns.get(opts.speaker_column).copied().unwrap_or("-");
            self.sentence_speaker = Some(if speaker == "-" {
                String::new()
            } else {
                speaker.to_string()
            });
        }

        let position = self.words.len();
        let coref = columns[columns.len() - 1];
        if coref != "-" && coref != "_" {
            for item in coref.split('|') {
                let opens = item.starts_with('(');
                let closes = item.ends_with(')');
                let digits = item.trim_start_matches('(').trim_end_matches(')');
                let id: usize = digits
                    .parse()
                    .map_err(|_| syntax(line, format!("bad coreference item {item:?}")))?;
                if opens {
                    self.stack(id).push(position);
                }
                if closes {
                    let start = self
                        .stack(id)
                        .pop()
                        .ok_or(ConllError::UnopenedBracket { line, id })?;
                    self.mentions.push((id, Span::new(start, position)));
                }
            }
        }
        Ok(())
    }

    fn end_sentence(&mut self, line: usize) -> Result<(), ConllError> {
        if self.sentence_words == 0 {
            return Ok(());
        }
        // Mentions never cross sentences; report instead of clipping.
        if let Some((id, _)) = self.open.iter().find(|(_, stack)| !stack.is_empty()) {
            return Err(ConllError::UnclosedBracket { line, id: *id });
        }
        self.open.clear();
        self.sentence_ends.push(self.words.len());
        self.speakers
            .push(self.sentence_speaker.take().unwrap_or_default());
        self.sentence_words = 0;
        Ok(())
    }

    fn finish(mut self, line: usize) -> Result<CorpusEntry, ConllError> {
        self.end_sentence(line)?;
        if self.words.is_empty() {
            return Err(ConllError::EmptyDocument { key: self.key });
        }
        // Genre is the corpus section prefix of the key, when present.
        let genre = self
            .key
            .split_once('/')
            .map(|(prefix, _)| prefix.to_string());
        let document = Document::new(
            self.key,
            self.words,
            self.sentence_ends,
            self.speakers,
            genre,
        )?;

        let mut ids: Vec<usize> = self.mentions.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut clusters: Vec<BTreeSet<Span>> = Vec::with_capacity(ids.len());
        for id in &ids {
            clusters.push(
                self.mentions
                    .iter()
                    .filter(|(k, _)| k == id)
                    .map(|(_, span)| *span)
                    .collect(),
            );
        }
        // Creation order is the document order of each cluster's first
        // mention.
        let first_mention = |cluster: &BTreeSet<Span>| {
            cluster
                .iter()
                .copied()
                .min_by(mention_order_cmp)
                .expect("non-empty cluster")
        };
        clusters.sort_by(|a, b| mention_order_cmp(&first_mention(a), &first_mention(b)));
        let gold = Clustering::from_clusters(clusters)?;

        Ok(CorpusEntry {
            document,
            gold,
            part: self.part,
        })
    }
}

fn parse_begin(line_no: usize, line: &str) -> Result<(String, u32), ConllError> {
    // #begin document (<key>); part NNN
    let rest = line.trim_start_matches("#begin document").trim();
    let rest = rest
        .strip_prefix('(')
        .ok_or_else(|| syntax(line_no, format!("malformed begin line {line:?}")))?;
    let (key, tail) = rest
        .rsplit_once(')')
        .ok_or_else(|| syntax(line_no, format!("malformed begin line {line:?}")))?;
    let part = match tail.trim().strip_prefix(';') {
        Some(tail) => {
            let digits = tail.trim().strip_prefix("part").map(str::trim).ok_or_else(|| {
                syntax(line_no, format!("malformed part declaration {tail:?}"))
            })?;
            digits
                .parse()
                .map_err(|_| syntax(line_no, format!("bad part number {digits:?}")))?
        }
        None if tail.trim().is_empty() => 0,
        None => return Err(syntax(line_no, format!("malformed begin line {line:?}"))),
    };
    Ok((key.to_string(), part))
}

/// Reads every document of a CoNLL stream. Accepts LF or CRLF input.
pub fn read_conll(reader: impl BufRead) -> Result<Vec<CorpusEntry>, ConllError> {
    read_conll_with(reader, &ReadOptions::default())
}

/// `read_conll` with an explicit speaker column, for exports that place it
/// elsewhere.
pub fn read_conll_with(
    reader: impl BufRead,
    opts: &ReadOptions,
) -> Result<Vec<CorpusEntry>, ConllError> {
    let mut entries = Vec::new();
    let mut current: Option<DocumentBuilder> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.starts_with("#begin document") {
            if let Some(builder) = &current {
                return Err(ConllError::MissingEnd {
                    key: builder.key.clone(),
                });
            }
            let (key, part) = parse_begin(line_no, line)?;
            current = Some(DocumentBuilder::new(key, part));
            continue;
        }
        if line.trim() == "#end document" {
            let builder = current
                .take()
                .ok_or_else(|| syntax(line_no, "#end document without #begin document"))?;
            entries.push(builder.finish(line_no)?);
            continue;
        }

        match &mut current {
            Some(builder) => {
                if line.trim().is_empty() {
                    builder.end_sentence(line_no)?;
                } else if line.starts_with('#') {
                    // Stray comment lines inside a document are not part of
                    // the format.
                    return Err(syntax(line_no, format!("unexpected marker line {line:?}")));
                } else {
                    let columns: Vec<&str> = line.split_whitespace().collect();
                    builder.row(line_no, &columns, opts)?;
                }
            }
            None if line.trim().is_empty() => {}
            None => return Err(syntax(line_no, format!("content outside document: {line:?}"))),
        }
    }

    if let Some(builder) = current {
        return Err(ConllError::MissingEnd { key: builder.key });
    }
    Ok(entries)
}

/// Reads a CoNLL file from disk.
pub fn read_conll_file(path: impl AsRef<Path>) -> Result<Vec<CorpusEntry>, ConllError> {
    read_conll(BufReader::new(File::open(path)?))
}

/// Writes one document with its (predicted or gold) clustering. Cluster ids
/// are densified to `0..C-1` in clustering order; at a token, opening
/// brackets are ordered by span length descending and closing brackets by
/// span length ascending. Output uses LF line endings.
pub fn write_conll(
    document: &Document,
    clustering: &Clustering,
    part: u32,
    mut sink: impl Write,
) -> Result<(), ConllError> {
    writeln!(sink, "#begin document ({}); part {:03}", document.doc_key(), part)?;
    for sentence in 1..=document.sentence_count() {
        let (first, last) = document.sentence_bounds(sentence).expect("in range");
        let speaker = document.speaker(sentence);
        let speaker = if speaker.is_empty() { "-" } else { speaker };
        for w in first..=last {
            let mut cell_parts: Vec<String> = Vec::new();

            let mut opens: Vec<(usize, Span)> = Vec::new();
            let mut closes: Vec<(usize, Span)> = Vec::new();
            for (idx, cluster) in clustering.clusters().iter().enumerate() {
                for span in cluster {
                    if span.start() == w && span.end() == w {
                        cell_parts.push(format!("({idx})"));
                    } else if span.start() == w {
                        opens.push((idx, *span));
                    } else if span.end() == w {
                        closes.push((idx, *span));
                    }
                }
            }
            opens.sort_by_key(|(_, s)| std::cmp::Reverse(s.len()));
            closes.sort_by_key(|(_, s)| s.len());
            let mut cell: Vec<String> = opens.iter().map(|(id, _)| format!("({id}")).collect();
            cell.extend(cell_parts);
            cell.extend(closes.iter().map(|(id, _)| format!("{id})")));
            let coref = if cell.is_empty() {
                "-".to_string()
            } else {
                cell.join("|")
            };

            writeln!(
                sink,
                "{}\t{}\t{}\t{}\t-\t-\t-\t-\t-\t{}\t-\t{}",
                document.doc_key(),
                part,
                w - first,
                document.word(w),
                speaker,
                coref
            )?;
        }
        writeln!(sink)?;
    }
    writeln!(sink, "#end document")?;
    Ok(())
}

/// Writes a sequence of documents into one CoNLL stream.
pub fn write_corpus<'a>(
    docs: impl IntoIterator<Item = (&'a Document, &'a Clustering, u32)>,
    mut sink: impl Write,
) -> Result<(), ConllError> {
    for (document, clustering, part) in docs {
        write_conll(document, clustering, part, &mut sink)?;
    }
    Ok(())
}
