pub mod cinterp;
pub mod oracle;
