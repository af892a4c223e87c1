//! Per-message delivery records and the summary statistics derived from them.

/// Outcome of one message. For UDP `delivered_slot` is the arrival slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub seq: u64,
    pub gen_slot: u32,
    pub delivered_slot: Option<u32>,
}

impl DeliveryRecord {
    pub fn in_order_delay(&self) -> Option<u32> {
        self.delivered_slot.map(|d| d - self.gen_slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransportMetrics {
    /// Mean over delivered messages; NaN when nothing was delivered.
    pub mean_inorder_delay: f64,
    pub max_inorder_delay: Option<u32>,
    /// Delivered messages per transmitted frame; NaN when nothing was sent.
    pub throughput: f64,
    /// Delivered / generated; NaN when nothing was generated.
    pub delivery_ratio: f64,
    pub generated: u64,
    pub delivered: u64,
    pub frames_sent: u64,
}

pub fn collect_metrics(records: &[DeliveryRecord], frames_sent: u64) -> TransportMetrics {
    let mut delivered = 0u64;
    let mut delay_sum = 0u64;
    let mut max_delay = None::<u32>;
    for d in records.iter().filter_map(DeliveryRecord::in_order_delay) {
        delivered += 1;
        delay_sum += d as u64;
        max_delay = Some(max_delay.map_or(d, |m| m.max(d)));
    }
    let ratio = |num: u64, den: u64| if den == 0 { f64::NAN } else { num as f64 / den as f64 };
    TransportMetrics {
        mean_inorder_delay: ratio(delay_sum, delivered),
        max_inorder_delay: max_delay,
        throughput: ratio(delivered, frames_sent),
        delivery_ratio: ratio(delivered, records.len() as u64),
        generated: records.len() as u64,
        delivered,
        frames_sent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excludes_undelivered_from_delay() {
        let recs = [
            DeliveryRecord { seq: 0, gen_slot: 0, delivered_slot: Some(2) },
            DeliveryRecord { seq: 1, gen_slot: 1, delivered_slot: None },
            DeliveryRecord { seq: 2, gen_slot: 2, delivered_slot: Some(8) },
        ];
        let m = collect_metrics(&recs, 6);
        assert_eq!(m.mean_inorder_delay, 4.0);
        assert_eq!(m.max_inorder_delay, Some(6));
        assert!((m.delivery_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.throughput - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn nothing_delivered() {
        let recs = [DeliveryRecord { seq: 0, gen_slot: 0, delivered_slot: None }];
        let m = collect_metrics(&recs, 3);
        assert_eq!(m.delivery_ratio, 0.0);
        assert!(m.mean_inorder_delay.is_nan());
        assert_eq!(m.max_inorder_delay, None);
    }
}
