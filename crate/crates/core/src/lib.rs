pub mod cli;
pub mod conic;
pub mod moments;
pub mod poly;
pub mod recover;
pub mod sc_sdp;
pub mod shapley;
pub mod stochgame;
pub mod verify;
