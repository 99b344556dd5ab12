#![allow(dead_code)]

pub mod dense;
pub mod fd;
pub mod ssim;
