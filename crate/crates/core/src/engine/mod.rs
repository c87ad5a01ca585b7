//! Plane families and the incidence machinery built on them: sharp
//! examples, bushes and the broad/narrow split, the Brascamp–Lieb
//! functional, L^p counting norms and slab rescaling.

pub mod bl;
pub mod bush;
pub mod family;
pub mod lp;
pub mod rescale;

pub use bl::{bl_constant_lower, dim_projection, verify_bl_bound, BlInstance, BlReport, CandidateStrategy};
pub use bush::{broad_narrow_classify, bush_directions, BushDirections, Classification, ClassifyConfig, TransverseTuple};
pub use family::{admissible_p_max, generate_sharp_example, FamilyParams, KReading, PlaneFamily};
pub use lp::{kakeya_sweep, lp_counting_norm, verify_kakeya_inequality, KakeyaRecord, KakeyaSweep};
pub use rescale::{rescale_slab, SlabRescaling};
