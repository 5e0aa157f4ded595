//! Sensor frame wire format.
//!
//! All multi-byte fields are big-endian.
//!
//! ```text
//! header (15 bytes)
//!   0..2   magic 0xA6 0x47
//!   2      version 0x01
//!   3      msg_type 0x01 (telemetry)
//!   4..8   node_id
//!   8..10  seq
//!   10     payload_len
//!   11..14 reserved, zero
//!   14     CRC-8 (poly 0x07) over bytes 0..14
//! payload (payload_len bytes, at most 30)
//!   0..4   timestamp_s
//!   4..6   battery_mv
//!   6      reading_count
//!   ...    reading_count x (kind u8, value f32)
//!   last 2 CRC-16/CCITT-FALSE over all prior payload bytes
//! ```

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::crc::{crc16_ccitt_false, crc8};

pub const MAGIC: [u8; 2] = [0xA6, 0x47];
pub const VERSION: u8 = 0x01;
pub const MSG_TELEMETRY: u8 = 0x01;
pub const HEADER_LEN: usize = 15;
pub const MAX_PAYLOAD_LEN: usize = 30;
pub const MAX_FRAME_LEN: usize = HEADER_LEN + MAX_PAYLOAD_LEN;
pub const MAX_BATTERY_MV: u16 = 6000;

const PAYLOAD_FIXED_LEN: usize = 4 + 2 + 1 + 2;
const READING_LEN: usize = 5;

/// Largest number of readings that fit in one payload.
pub const MAX_READINGS: usize = (MAX_PAYLOAD_LEN - PAYLOAD_FIXED_LEN) / READING_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    WaterTemperatureC,
    DissolvedOxygenMgl,
    Ph,
    TurbidityNtu,
    AmmoniaMgl,
}

impl SensorKind {
    pub const ALL: [SensorKind; 5] = [
        SensorKind::WaterTemperatureC,
        SensorKind::DissolvedOxygenMgl,
        SensorKind::Ph,
        SensorKind::TurbidityNtu,
        SensorKind::AmmoniaMgl,
    ];

    pub fn code(self) -> u8 {
        match self {
            SensorKind::WaterTemperatureC => 0,
            SensorKind::DissolvedOxygenMgl => 1,
            SensorKind::Ph => 2,
            SensorKind::TurbidityNtu => 3,
            SensorKind::AmmoniaMgl => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    /// Series name used in telemetry documents, e.g. `water_temperature_c`.
    pub fn series_name(self) -> &'static str {
        match self {
            SensorKind::WaterTemperatureC => "water_temperature_c",
            SensorKind::DissolvedOxygenMgl => "dissolved_oxygen_mgl",
            SensorKind::Ph => "ph",
            SensorKind::TurbidityNtu => "turbidity_ntu",
            SensorKind::AmmoniaMgl => "ammonia_mgl",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.series_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub kind: SensorKind,
    pub value: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub node_id: u32,
    pub seq: u16,
    pub timestamp_s: u32,
    pub readings: Vec<Reading>,
    pub battery_mv: u16,
}

impl SensorFrame {
    pub fn payload_len(&self) -> usize {
        PAYLOAD_FIXED_LEN + READING_LEN * self.readings.len()
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload_len()
    }
}

/// Encoded frame bytes. Only produced by [`encode`], so the layout is always valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame(Vec<u8>);

impl WireFrame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl AsRef<[u8]> for WireFrame {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("frame has no readings")]
    NoReadings,
    #[error("{0} readings exceed the 30-byte payload (max {MAX_READINGS})")]
    PayloadOverflow(usize),
    #[error("battery level {0} mV exceeds {MAX_BATTERY_MV} mV")]
    BatteryOutOfRange(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("header CRC mismatch: computed {computed:#04x}, carried {carried:#04x}")]
    HeaderCrcMismatch { computed: u8, carried: u8 },
    #[error("payload CRC mismatch: computed {computed:#06x}, carried {carried:#06x}")]
    PayloadCrcMismatch { computed: u16, carried: u16 },
    #[error("unknown sensor kind {0}")]
    UnknownSensorKind(u8),
    #[error("unsupported message type {0}")]
    UnsupportedMessageType(u8),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

impl DecodeError {
    /// Stable snake_case identifier, used as a counter key in loss diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            DecodeError::Truncated { .. } => "truncated",
            DecodeError::BadMagic(_) => "bad_magic",
            DecodeError::BadVersion(_) => "bad_version",
            DecodeError::HeaderCrcMismatch { .. } => "header_crc_mismatch",
            DecodeError::PayloadCrcMismatch { .. } => "payload_crc_mismatch",
            DecodeError::UnknownSensorKind(_) => "unknown_sensor_kind",
            DecodeError::UnsupportedMessageType(_) => "unsupported_message_type",
            DecodeError::LengthMismatch(_) => "length_mismatch",
            DecodeError::InvalidField(_) => "invalid_field",
        }
    }
}

pub fn encode(frame: &SensorFrame) -> Result<WireFrame, EncodeError> {
    if frame.readings.is_empty() {
        return Err(EncodeError::NoReadings);
    }
    if frame.readings.len() > MAX_READINGS {
        return Err(EncodeError::PayloadOverflow(frame.readings.len()));
    }
    if frame.battery_mv > MAX_BATTERY_MV {
        return Err(EncodeError::BatteryOutOfRange(frame.battery_mv));
    }
    let payload_len = frame.payload_len();
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);

    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(MSG_TELEMETRY);
    out.extend_from_slice(&frame.node_id.to_be_bytes());
    out.extend_from_slice(&frame.seq.to_be_bytes());
    out.push(payload_len as u8);
    out.extend_from_slice(&[0, 0, 0]);
    out.push(crc8(&out[..HEADER_LEN - 1]));

    out.extend_from_slice(&frame.timestamp_s.to_be_bytes());
    out.extend_from_slice(&frame.battery_mv.to_be_bytes());
    out.push(frame.readings.len() as u8);
    for r in &frame.readings {
        out.push(r.kind.code());
        out.extend_from_slice(&r.value.to_be_bytes());
    }
    let crc = crc16_ccitt_false(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_be_bytes());

    debug_assert_eq!(out.len(), HEADER_LEN + payload_len);
    Ok(WireFrame(out))
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode(bytes: &[u8]) -> Result<SensorFrame, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let header = &bytes[..HEADER_LEN];
    if header[..2] != MAGIC {
        return Err(DecodeError::BadMagic(be_u16(&header[..2])));
    }
    if header[2] != VERSION {
        return Err(DecodeError::BadVersion(header[2]));
    }
    let computed = crc8(&header[..HEADER_LEN - 1]);
    let carried = header[HEADER_LEN - 1];
    if computed != carried {
        return Err(DecodeError::HeaderCrcMismatch { computed, carried });
    }
    if header[3] != MSG_TELEMETRY {
        return Err(DecodeError::UnsupportedMessageType(header[3]));
    }
    if header[11..14] != [0, 0, 0] {
        return Err(DecodeError::InvalidField("reserved bytes are not zero".into()));
    }
    let node_id = be_u32(&header[4..8]);
    let seq = be_u16(&header[8..10]);
    let payload_len = usize::from(header[10]);
    if !(PAYLOAD_FIXED_LEN..=MAX_PAYLOAD_LEN).contains(&payload_len) {
        return Err(DecodeError::LengthMismatch(format!(
            "payload_len {payload_len} outside {PAYLOAD_FIXED_LEN}..={MAX_PAYLOAD_LEN}"
        )));
    }
    let total = HEADER_LEN + payload_len;
    if bytes.len() < total {
        return Err(DecodeError::Truncated {
            needed: total,
            got: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(DecodeError::LengthMismatch(format!(
            "{} trailing bytes",
            bytes.len() - total
        )));
    }

    let payload = &bytes[HEADER_LEN..];
    let body = &payload[..payload_len - 2];
    let computed = crc16_ccitt_false(body);
    let carried = be_u16(&payload[payload_len - 2..]);
    if computed != carried {
        return Err(DecodeError::PayloadCrcMismatch { computed, carried });
    }

    let timestamp_s = be_u32(&body[0..4]);
    let battery_mv = be_u16(&body[4..6]);
    let count = usize::from(body[6]);
    if PAYLOAD_FIXED_LEN + READING_LEN * count != payload_len {
        return Err(DecodeError::LengthMismatch(format!(
            "reading_count {count} does not match payload_len {payload_len}"
        )));
    }
    if count == 0 {
        return Err(DecodeError::InvalidField("no readings".into()));
    }
    if battery_mv > MAX_BATTERY_MV {
        return Err(DecodeError::InvalidField(format!(
            "battery_mv {battery_mv} exceeds {MAX_BATTERY_MV}"
        )));
    }
    let readings = body[7..]
        .chunks_exact(READING_LEN)
        .map(|chunk| {
            let kind = SensorKind::from_code(chunk[0])
                .ok_or(DecodeError::UnknownSensorKind(chunk[0]))?;
            let value = f32::from_be_bytes([chunk[1], chunk[2], chunk[3], chunk[4]]);
            Ok(Reading { kind, value })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SensorFrame {
        node_id,
        seq,
        timestamp_s,
        readings,
        battery_mv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SensorFrame {
        SensorFrame {
            node_id: 1,
            seq: 1,
            timestamp_s: 1_614_556_800,
            readings: vec![Reading {
                kind: SensorKind::WaterTemperatureC,
                value: 24.5,
            }],
            battery_mv: 3912,
        }
    }

    #[test]
    fn roundtrip_single_reading() {
        let f = sample();
        let wire = encode(&f).unwrap();
        assert_eq!(decode(wire.as_bytes()).unwrap(), f);
    }

    #[test]
    fn one_reading_frame_is_29_bytes() {
        let wire = encode(&sample()).unwrap();
        assert_eq!(wire.len(), 29);
        assert!(wire.len() <= MAX_FRAME_LEN);
    }

    #[test]
    fn known_layout() {
        // Built independently with Python's struct module and a bitwise CRC script.
        let wire = encode(&sample()).unwrap();
        assert_eq!(
            wire.to_hex(),
            "a64701010000000100010e00000058603c2e800f48010041c40000b4e0"
        );
    }

    #[test]
    fn four_readings_fill_29_byte_payload() {
        let mut f = sample();
        f.readings = SensorKind::ALL[..4]
            .iter()
            .map(|&kind| Reading { kind, value: 1.0 })
            .collect();
        let wire = encode(&f).unwrap();
        assert_eq!(wire.len(), HEADER_LEN + 29);
    }

    #[test]
    fn five_readings_overflow() {
        let mut f = sample();
        f.readings = SensorKind::ALL
            .iter()
            .map(|&kind| Reading { kind, value: 1.0 })
            .collect();
        assert_eq!(encode(&f), Err(EncodeError::PayloadOverflow(5)));
    }

    #[test]
    fn empty_readings_rejected() {
        let mut f = sample();
        f.readings.clear();
        assert_eq!(encode(&f), Err(EncodeError::NoReadings));
    }

    #[test]
    fn battery_bound() {
        let mut f = sample();
        f.battery_mv = 6001;
        assert_eq!(encode(&f), Err(EncodeError::BatteryOutOfRange(6001)));
    }

    #[test]
    fn empty_input_is_truncated() {
        assert_eq!(decode(&[]).unwrap_err().kind(), "truncated");
    }

    #[test]
    fn last_byte_flip_is_payload_crc_mismatch() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        *bytes.last_mut().unwrap() ^= 0xFF;
        assert_eq!(decode(&bytes).unwrap_err().kind(), "payload_crc_mismatch");
    }

    #[test]
    fn zero_magic_is_bad_magic() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        bytes[0] = 0;
        bytes[1] = 0;
        assert_eq!(decode(&bytes), Err(DecodeError::BadMagic(0)));
    }

    #[test]
    fn bad_version() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        bytes[2] = 2;
        assert_eq!(decode(&bytes), Err(DecodeError::BadVersion(2)));
    }

    #[test]
    fn payload_cut_short_is_truncated() {
        let bytes = encode(&sample()).unwrap().into_bytes();
        let err = decode(&bytes[..20]).unwrap_err();
        assert_eq!(err.kind(), "truncated");
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        bytes.push(0);
        assert_eq!(decode(&bytes).unwrap_err().kind(), "length_mismatch");
    }

    #[test]
    fn unknown_kind_with_valid_crc() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        bytes[HEADER_LEN + 7] = 9;
        let n = bytes.len();
        let crc = crc16_ccitt_false(&bytes[HEADER_LEN..n - 2]);
        bytes[n - 2..].copy_from_slice(&crc.to_be_bytes());
        assert_eq!(decode(&bytes), Err(DecodeError::UnknownSensorKind(9)));
    }

    #[test]
    fn header_flip_is_header_crc_mismatch() {
        let mut bytes = encode(&sample()).unwrap().into_bytes();
        bytes[5] ^= 0x10;
        assert_eq!(decode(&bytes).unwrap_err().kind(), "header_crc_mismatch");
    }
}
