//! Bitwise CRC routines used by the sensor frame layout.
//!
//! Both are MSB-first, non-reflected, with no final XOR:
//! - CRC-8, polynomial 0x07, init 0x00 (check value over "123456789" is 0xF4)
//! - CRC-16/CCITT-FALSE, polynomial 0x1021, init 0xFFFF (check value 0x29B1)

pub fn crc8(bytes: &[u8]) -> u8 {
    let mut crc: u8 = 0x00;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ 0x07
            } else {
                crc << 1
            };
        }
    }
    crc
}

pub fn crc16_ccitt_false(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= u16::from(b) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}
