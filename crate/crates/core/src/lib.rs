pub mod error;
pub mod triangulation;
pub mod quadrature;
pub mod tent;
pub mod pl_space;
pub mod density;
pub mod forms;
pub mod seed;
pub mod mosco;
pub mod verify;
