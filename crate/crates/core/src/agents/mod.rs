pub mod ctd;
pub mod mug;
pub mod nav;
pub mod uav;
pub mod usv;

pub use mug::{mug_tick, MugAgent, MugConfig, MugContext, MugEvent, MugMode, MUG_EDGES};
pub use uav::{uav_tick, UavAgent, UavConfig, UavContext, UavEvent, UavMode};
pub use usv::{usv_tick, UsvAgent, UsvConfig};
