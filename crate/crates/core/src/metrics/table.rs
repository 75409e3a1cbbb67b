use alloc::string::String;

use serde::{Deserialize, Serialize};

/// One (dataset, method) row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub method: String,
    pub ssim: f64,
    pub phv_per_layer: [f64; 4],
    pub phv_avg: f64,
    pub fid: f64,
    pub kid_x1000: f64,
}

impl MetricRow {
    /// Column headers, in table order.
    pub const HEADER: [&'static str; 10] =
        ["dataset", "method", "SSIM", "PHV_layer1", "PHV_layer2", "PHV_layer3", "PHV_layer4", "PHV_avg", "FID", "KIDx1000"];
}
