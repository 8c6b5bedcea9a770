//! Projection of word-topic vectors onto a lower-dimensional space.
//!
//! Reducers are fit on the vocabulary table (one row per word), never on
//! documents. Encoded rows are then summed per document like the original
//! word-topic vectors.

mod autoencoder;
mod binio;
mod pca;
mod random_projection;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{DenseWordTable, WordTopicTable};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

pub use autoencoder::{hidden_size, train_autoencoder, AeFit, AeTrainConfig, Autoencoder};
pub use pca::{fit_pca_subspace, pca_rank_rule, PcaBlock, PcaSubspace};
pub use random_projection::{fit_random_projection, RandomProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReducerKind {
    RandomProjection,
    PcaSubspace,
    Autoencoder,
}

impl std::str::FromStr for ReducerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-projection" | "rp" => Ok(Self::RandomProjection),
            "pca-subspace" | "pca" => Ok(Self::PcaSubspace),
            "autoencoder" | "ae" => Ok(Self::Autoencoder),
            _ => Err(Error::Config(format!("unknown reducer {s:?}"))),
        }
    }
}

impl std::fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RandomProjection => "random-projection",
            Self::PcaSubspace => "pca-subspace",
            Self::Autoencoder => "autoencoder",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReducerModel {
    RandomProjection(RandomProjection),
    PcaSubspace(PcaSubspace),
    Autoencoder(Autoencoder),
}

const MAGIC: &[u8; 8] = b"SCDVRED\0";
const VERSION: u32 = 1;

impl ReducerModel {
    pub fn kind(&self) -> ReducerKind {
        match self {
            Self::RandomProjection(_) => ReducerKind::RandomProjection,
            Self::PcaSubspace(_) => ReducerKind::PcaSubspace,
            Self::Autoencoder(_) => ReducerKind::Autoencoder,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Self::RandomProjection(m) => m.in_dim,
            Self::PcaSubspace(m) => m.in_dim(),
            Self::Autoencoder(m) => m.sizes[0],
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::RandomProjection(m) => m.out_dim,
            Self::PcaSubspace(m) => m.out_dim(),
            Self::Autoencoder(m) => m.code_dim(),
        }
    }

    /// Encodes a sparse input given as sorted `(index, value)` pairs.
    pub fn encode_sparse(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        match self {
            Self::RandomProjection(m) => m.encode_sparse(indices, values),
            Self::PcaSubspace(m) => m.encode_sparse(indices, values),
            Self::Autoencoder(m) => {
                let mut x = vec![0.0; m.sizes[0]];
                for (&i, &v) in indices.iter().zip(values) {
                    x[i as usize] = v;
                }
                m.encode(&x)
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension {
                expected: self.in_dim(),
                found: x.len(),
            });
        }
        Ok(match self {
            Self::Autoencoder(m) => m.encode(x),
            _ => {
                let (idx, val): (Vec<u32>, Vec<f64>) = x
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i as u32, *v))
                    .unzip();
                self.encode_sparse(&idx, &val)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = binio::Writer::new(MAGIC, VERSION);
        match self {
            Self::RandomProjection(m) => {
                w.u64(0);
                m.write(&mut w);
            }
            Self::PcaSubspace(m) => {
                w.u64(1);
                m.write(&mut w);
            }
            Self::Autoencoder(m) => {
                w.u64(2);
                m.write(&mut w);
            }
        }
        std::fs::write(path, w.finish()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = binio::Reader::new(&bytes, MAGIC, VERSION, path)?;
        let model = match r.u64()? {
            0 => Self::RandomProjection(RandomProjection::read(&mut r)?),
            1 => Self::PcaSubspace(PcaSubspace::read(&mut r)?),
            2 => Self::Autoencoder(Autoencoder::read(&mut r)?),
            t => return Err(Error::parse(path, 0, format!("unknown reducer tag {t}"))),
        };
        r.expect_end()?;
        Ok(model)
    }
}

/// Reduced word-topic vectors: one `out_dim` row per vocabulary word.
pub fn reduce_table(model: &ReducerModel, table: &WordTopicTable) -> Result<DenseWordTable> {
    if model.in_dim() != table.dim() {
        return Err(Error::Dimension {
            expected: model.in_dim(),
            found: table.dim(),
        });
    }
    let out = model.out_dim();
    let data: Vec<f64> = match model {
        ReducerModel::Autoencoder(ae) => ae.encode_table(table),
        _ => (0..table.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let (idx, val) = table.row(i);
                model.encode_sparse(&idx, val)
            })
            .collect(),
    };
    debug_assert_eq!(data.len(), table.len() * out);
    Ok(DenseWordTable {
        dim: out,
        tokens: table.tokens().to_vec(),
        data,
    })
}

impl DenseWordTable {
    /// The table as a word-vector matrix, for export in the vector file
    /// format.
    pub fn to_embedding_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.tokens.clone(), self.dim, self.data.clone())
    }

    pub fn from_embedding_matrix(m: &EmbeddingMatrix) -> Self {
        Self {
            dim: m.dim(),
            tokens: m.tokens().to_vec(),
            data: m.as_slice().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::{token_index, DocumentEmbedder};
    use crate::embeddings::{load_vectors, save_vectors};
    use rand::{Rng, SeedableRng};

    fn table(seed: u64) -> WordTopicTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (v, k, d) = (25, 4, 5);
        let data: Vec<f64> = (0..v * k * d)
            .map(|j| if (j / d) % 3 == 0 { rng.random::<f64>() - 0.5 } else { 0.0 })
            .collect();
        let tokens = (0..v).map(|i| format!("w{i}")).collect();
        WordTopicTable::from_dense(tokens, k, d, 2, &data).unwrap()
    }

    #[test]
    fn projection_commutes_with_composition() {
        let t = table(1);
        let model = ReducerModel::RandomProjection(fit_random_projection(t.dim(), 6, 7).unwrap());
        let reduced = reduce_table(&model, &t).unwrap();
        assert_eq!(reduced.len(), t.len());
        let index = token_index(t.tokens());
        let doc = ["w1", "w3", "w3", "w10", "w24", "zzz"];
        let ids = crate::composition::resolve_tokens(&index, &doc);
        let full = t.embed_indices(&ids, false).vector.to_dense();
        let projected = model.encode(&full).unwrap();
        let direct = reduced.embed_indices(&ids, false).vector.to_dense();
        for (a, b) in projected.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn reduced_table_roundtrips_through_vector_file() {
        let t = table(2);
        let model = ReducerModel::PcaSubspace(fit_pca_subspace(&t, 500).unwrap());
        let reduced = reduce_table(&model, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.vec");
        save_vectors(&reduced.to_embedding_matrix().unwrap(), &path).unwrap();
        let back = DenseWordTable::from_embedding_matrix(&load_vectors(&path).unwrap());
        assert_eq!(back.tokens, reduced.tokens);
        assert_eq!(back.dim, reduced.dim);
        for (a, b) in back.data.iter().zip(&reduced.data) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let t = table(3);
        let model = ReducerModel::RandomProjection(fit_random_projection(t.dim() + 1, 4, 1).unwrap());
        assert!(matches!(reduce_table(&model, &t), Err(Error::Dimension { .. })));
        assert!(matches!(model.encode(&[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn models_roundtrip_through_files() {
        let t = table(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let models = [
            ReducerModel::RandomProjection(fit_random_projection(t.dim(), 5, 3).unwrap()),
            ReducerModel::PcaSubspace(fit_pca_subspace(&t, 500).unwrap()),
            ReducerModel::Autoencoder(Autoencoder::for_dims(t.dim(), 4, &mut rng)),
        ];
        let dir = tempfile::tempdir().unwrap();
        for (i, m) in models.iter().enumerate() {
            let path = dir.path().join(format!("m{i}.bin"));
            m.save(&path).unwrap();
            assert_eq!(&ReducerModel::load(&path).unwrap(), m);
        }
        std::fs::write(dir.path().join("bad"), b"nope").unwrap();
        assert!(ReducerModel::load(&dir.path().join("bad")).is_err());
    }

    #[test]
    fn reducer_names_parse() {
        for k in [ReducerKind::RandomProjection, ReducerKind::PcaSubspace, ReducerKind::Autoencoder] {
            assert_eq!(k.to_string().parse::<ReducerKind>().unwrap(), k);
        }
        assert!("svd".parse::<ReducerKind>().is_err());
    }
}
