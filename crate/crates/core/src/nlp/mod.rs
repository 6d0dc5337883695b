//! Comment features: keyword triplets mined from dependency parses of policy
//! comments, and one paragraph vector per (unit, polarity) document.

mod conllu;
mod corpus;
mod doc2vec;
mod triplets;

pub use conllu::{parse_conllu, DepSentence, DepToken};
pub use corpus::Corpus;
pub use doc2vec::{embed_docs, read_vectors, write_vectors, Doc2VecConfig, DocVector, DocVectors, Embedding};
pub use triplets::{extract_triplets, triplet_docs, KeywordTriplet, TripletDoc};
