//! Similarity between tags and the linear layouts built from it.

pub mod layout;
pub mod similarity;

pub use layout::{
    brute_force_order, emit_hints, mc_order, mla_cost, mla_gain, nn_order, nn_order_counted, pwmc_order,
    HintItem, LayoutError, LayoutOrder, NnStart, BRUTE_FORCE_MAX,
};
pub use similarity::{
    cosine, jaccard, matrix_from_vectors, similarity, similarity_matrix, tag_vector, tag_vectors, tanimoto,
    SimilarityError, SimilarityKind, SimilarityMatrix, TagVector, VectorSource,
};
