pub mod depth;
pub mod g2;
pub mod odmr;
pub mod saturation;
pub mod scan;
pub mod simulate;
pub mod stability;
pub mod yields;
