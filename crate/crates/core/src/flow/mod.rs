//! Dense flow fields: warping, composition, flipping, `.flo` I/O and rendering.

mod field;
mod flo;
mod viz;
mod warp;

pub use field::{flip_horizontal, scale_flow, FlowField};
pub use flo::{decode_flo, encode_flo, read_flow, write_flow, FLO_MAGIC};
pub use viz::flow_to_color;
pub use warp::{accumulate_flow, compose_flows, warp_backward, warp_backward_flow_grad, ComposeMode};

