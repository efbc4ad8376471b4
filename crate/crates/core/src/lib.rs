pub mod barycentric;
pub mod data;
pub mod itd;
pub mod projection;
pub mod spectra;
pub mod cubesphere;
pub mod neural;
pub mod pipeline;
pub mod eval;
