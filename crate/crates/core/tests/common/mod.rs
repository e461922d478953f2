#![allow(dead_code)]

pub mod active_set;
pub mod lemma;
pub mod lti;
pub mod random_qp;
