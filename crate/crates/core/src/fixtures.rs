//! The reference protocols used throughout the test suites and demos.

use crate::protocol::{parse_protocol, ProtocolSpec};

pub const FLEXIBLE_PURCHASE: &str = include_str!("../protocols/flexible-purchase.bspl");
pub const BUGGY_PURCHASE: &str = include_str!("../protocols/buggy-flexible-purchase.bspl");
pub const MINIMAL: &str = include_str!("../protocols/minimal.bspl");

pub fn flexible_purchase() -> ProtocolSpec {
    parse_protocol(FLEXIBLE_PURCHASE).expect("bundled protocol parses")
}

pub fn buggy_purchase() -> ProtocolSpec {
    parse_protocol(BUGGY_PURCHASE).expect("bundled protocol parses")
}

pub fn minimal() -> ProtocolSpec {
    parse_protocol(MINIMAL).expect("bundled protocol parses")
}

/// Demo decision makers and reminder policies for the purchase scenario.
pub const BUYER_SCRIPT: &str = include_str!("../demo/buyer.script");
pub const SELLER_SCRIPT: &str = include_str!("../demo/seller.script");
pub const BUYER_POLICY: &str = include_str!("../demo/buyer.policy");
pub const SELLER_POLICY: &str = include_str!("../demo/seller.policy");
