pub mod encode;
pub mod evaluate;
pub mod gabor;
pub mod oracle_check;
pub mod train;
