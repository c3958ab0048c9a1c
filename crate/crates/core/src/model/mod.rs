//! Domain types shared by every pipeline stage.

mod labels;
mod record;
mod split;
mod volume;

pub use labels::{
    consensus_merge, task_label, tier_from_grades, Annotation, ConsensusLabel, Grade, Grades, LabelError, Task, Tier,
};
pub use record::{FieldStrength, ImageRecord};
pub use split::{DatasetSplit, SplitViolation};
pub use volume::{Volume, VolumeError};
