use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ScoringError;

pub const BINARY_MAGIC: &[u8; 4] = b"NBEM";
pub const BINARY_VERSION: u8 = 0x01;

/// Fixed-dimension news id -> vector map. Insertion order is kept for output.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self, ScoringError> {
        if dim == 0 {
            return Err(ScoringError::Format("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            normalized: false,
        })
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self, ScoringError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut table = Self::new(dim)?;
        for (id, v) in rows {
            table.insert(id.into(), &v)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, id: String, vector: &[f32]) -> Result<(), ScoringError> {
        if vector.len() != self.dim {
            return Err(ScoringError::DimMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(ScoringError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(ScoringError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        self.normalized = false;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Scales every vector to unit L2 norm.
    pub fn l2_normalize(mut self) -> Result<Self, ScoringError> {
        for (id, chunk) in self.ids.iter().zip(self.data.chunks_exact_mut(self.dim)) {
            let norm = chunk.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(ScoringError::ZeroVector(id.clone()));
            }
            for x in chunk.iter_mut() {
                *x = (*x as f64 / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn write_binary<W: Write>(&self, mut sink: W) -> Result<(), ScoringError> {
        sink.write_all(BINARY_MAGIC)?;
        sink.write_all(&[BINARY_VERSION])?;
        sink.write_all(&(self.dim as u32).to_le_bytes())?;
        sink.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, v) in self.iter() {
            let len = u16::try_from(id.len())
                .map_err(|_| ScoringError::Format(format!("id {id:?} longer than 65535 bytes")))?;
            sink.write_all(&len.to_le_bytes())?;
            sink.write_all(id.as_bytes())?;
            for x in v {
                sink.write_all(&x.to_le_bytes())?;
            }
        }
        sink.flush()?;
        Ok(())
    }

    /// `id<TAB>v1,v2,...` per line. Values print with the shortest
    /// round-tripping representation.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> Result<(), ScoringError> {
        for (id, v) in self.iter() {
            let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(sink, "{id}\t{}", values.join(","))?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoringError> {
        let sink = BufWriter::new(File::create(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => self.write_tsv(sink),
            _ => self.write_binary(sink),
        }
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), ScoringError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ScoringError::Format(format!("truncated binary table while reading {what}")),
        _ => ScoringError::Io(e),
    })
}

fn read_binary<R: Read>(mut r: R) -> Result<EmbeddingTable, ScoringError> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != BINARY_MAGIC {
        return Err(ScoringError::Format("bad magic".into()));
    }
    let mut version = [0u8; 1];
    read_exact_or(&mut r, &mut version, "version")?;
    if version[0] != BINARY_VERSION {
        return Err(ScoringError::Format(format!("unsupported version {}", version[0])));
    }
    let mut b4 = [0u8; 4];
    read_exact_or(&mut r, &mut b4, "dim")?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    read_exact_or(&mut r, &mut b8, "count")?;
    let count = u64::from_le_bytes(b8);

    let mut table = EmbeddingTable::new(dim)?;
    let mut raw = vec![0u8; dim * 4];
    let mut vector = vec![0f32; dim];
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        read_exact_or(&mut r, &mut b2, "id length")?;
        let mut id = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact_or(&mut r, &mut id, "id")?;
        let id = String::from_utf8(id).map_err(|_| ScoringError::Format("id is not UTF-8".into()))?;
        read_exact_or(&mut r, &mut raw, &format!("vector of {id:?}"))?;
        for (x, b) in vector.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        table.insert(id, &vector)?;
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(ScoringError::Format(format!("trailing bytes after {count} records")));
    }
    Ok(table)
}

fn read_tsv<R: BufRead>(r: R) -> Result<EmbeddingTable, ScoringError> {
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| ScoringError::Format(format!("line {}: expected id<TAB>values", idx + 1)))?;
        let vector = values
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ScoringError::Format(format!("line {} ({id}): {e}", idx + 1)))?;
        let t = match &mut table {
            Some(t) => t,
            None => table.insert(EmbeddingTable::new(vector.len())?),
        };
        t.insert(id.to_string(), &vector)?;
    }
    table.ok_or_else(|| ScoringError::Format("empty TSV embedding file".into()))
}

/// Reads an embedding table, choosing the format by its leading magic bytes.
pub fn read_embeddings<R: BufRead>(mut r: R) -> Result<EmbeddingTable, ScoringError> {
    let head = r.fill_buf()?;
    if head.starts_with(BINARY_MAGIC) {
        read_binary(r)
    } else {
        read_tsv(r)
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, ScoringError> {
    let file =
        File::open(path).map_err(|e| ScoringError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_embeddings(BufReader::new(file))
}
