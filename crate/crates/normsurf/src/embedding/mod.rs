pub mod glued;
pub mod metric;
pub mod parallelogram;
pub mod pipeline;
pub mod fsigma;
