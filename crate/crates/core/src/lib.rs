//! Task-alignment diagnostics for vision foundation models.
//!
//! Given feature embeddings of the same downstream samples pushed through
//! several variants of one architecture (random-weight, pretrained,
//! fine-tuned, trained from scratch), this crate measures how far
//! fine-tuning moved the representation with a Gaussian-kernel MMD², and
//! relates those distances to how much fine-tuning helped.
//!
//! ```
//! use alignscope::{mmd2_biased, EmbeddingSet, Estimator, KernelConfig};
//!
//! let a = EmbeddingSet::from_vecs(&[vec![0.0]]).unwrap();
//! let b = EmbeddingSet::from_vecs(&[vec![1.0]]).unwrap();
//! let r = mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedEqualN).unwrap();
//! assert!((r.value - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
//! ```
//!
//! Module map:
//!
//! * [`kernel`]: Gaussian kernel, biased MMD², median-heuristic bandwidth
//! * [`store`]: EMB1 and CSV embeddings, the task manifest, training logs
//! * [`alignment`]: D2R / D2P / D2S per task
//! * [`stats`]: Pearson r and its Student-t p-value
//! * [`transfer`]: relative performance gain, correlation, efficiency, convergence, plot tables
//! * [`report`]: everything above for a whole manifest
//! * [`synth`]: seeded synthetic scenarios
//! * [`cli`]: the `alignscope` binary

pub mod alignment;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod format;
pub mod kernel;
pub mod report;
pub mod stats;
pub mod store;
pub mod synth;
pub mod transfer;

pub use alignment::{alignment_report, d2p, d2r, d2s, AlignmentReport, DistanceMetric};
pub use embedding::{Dtype, EmbeddingSet, RoleTag};
pub use error::{Error, Result};
pub use kernel::{gaussian_kernel, median_heuristic_bandwidth, mmd2_biased, BandwidthMode, Estimator, KernelConfig, MmdResult};
pub use stats::{pearson_p_two_sided, pearson_r};
pub use store::{load_embeddings, load_manifest, save_embeddings, EmbeddingFormat, TaskManifest, TrainingLog};
pub use synth::{gen_gaussian_set, gen_scenario, ScenarioSpec};
pub use transfer::{
    convergence_stats, correlate_alignment_vs_rpg, efficiency_ratio, emit_plot_data, rpg, Reference, RpgRecord,
};

// The guide's code listings are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mmd.md")]
    mod mmd {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    mod transfer {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
