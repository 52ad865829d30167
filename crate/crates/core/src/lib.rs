pub mod analog;
pub mod checkpoint;
pub mod dataio;
pub mod experiment;
pub mod hwcost;
pub mod math;
pub mod network;
pub mod trainers;
