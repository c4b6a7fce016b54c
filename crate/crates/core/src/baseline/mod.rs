//! Conventional tweet representations: word-count matrices and their
//! low-dimensional reductions.

pub mod doc_term;
pub mod lda;
pub mod linalg;
pub mod nmf;
pub mod reduce;

pub use doc_term::{build_bow, build_tfidf, DocTermMatrix, Weighting};
pub use lda::{lda_fit_transform, LdaModel, LdaParams};
pub use linalg::DataMatrix;
pub use nmf::{nmf_fit, nmf_fit_transform, nmf_fit_with, NmfFit, NmfInit};
pub use reduce::{pca_fit_transform, pca_reduce, tsvd_fit, tsvd_reduce, PcaFit};
