//! File formats and rendering behind the `evflow` binary: Middlebury `.flo`
//! I/O, portable gray/pixmap emission, the flow color wheel, and flat
//! key=value config files.

pub mod config;
pub mod flo;
pub mod pnm;
pub mod render;
