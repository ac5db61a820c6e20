pub mod gtfs;
pub mod geo;
pub mod population;
pub mod router;
pub mod scores;
pub mod equity;
pub mod report;
