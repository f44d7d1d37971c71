pub mod distortion;
pub mod fem;
pub mod frame;
pub mod illum;
pub mod io;
pub mod markers;
pub mod morph;
pub mod optim;
pub mod photostereo;
pub mod plot;
pub mod poisson;
pub mod simulator;
pub mod slip;
pub mod tps;
