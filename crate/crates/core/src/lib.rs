pub mod field;
pub mod quadrature;
pub mod states;
pub mod eigen;
pub mod spectrum;
pub mod lorentz;
pub mod norms;
pub mod fit;
pub mod interaction;
pub mod modulation;
pub mod energy;
pub mod evolve;
pub mod shoot;
pub mod suites;
pub mod experiment;
