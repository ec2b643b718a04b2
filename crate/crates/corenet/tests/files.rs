use std::fs;
use std::path::Path;

use corenet::checkpoint::{decode, encode, load_checkpoint, save_checkpoint, MAGIC};
use corenet::datafile::{self, read_dataset, synthesize, write_dataset, RECORDS_FILE, RECORD_BYTES};
use corenet::error::exit;
use corenet::Error;
use corenet_core::dataset::{DatasetConfig, Split};
use corenet_core::models::{ArConfig, Checkpoint, MrConfig};
use corenet_core::optim::{AdamConfig, AdamState};
use corenet_core::training::Networks;
use proptest::prelude::*;
use tempfile::tempdir;

fn small_config(seed: u64) -> DatasetConfig {
    let mut c = DatasetConfig::scaled(0.01, seed);
    c.train_count = 6;
    c.val_count = 3;
    c.test_per_cell = 1;
    c.test_snr_levels = vec![-10.0, 4.0];
    c
}

fn checkpoint(seed: u64, width: usize) -> Checkpoint {
    let nets = Networks::init(ArConfig::uniform(width), MrConfig::uniform(width), seed).unwrap();
    let mut ar_optimizer = AdamState::new(&nets.ar, AdamConfig::default());
    ar_optimizer.step_count = seed % 97;
    for t in ar_optimizer.first_moment.tensors_mut() {
        for (k, v) in t.data_mut().iter_mut().enumerate() {
            *v = (k as f32 * 0.37 + seed as f32).sin() * 1e-3;
        }
    }
    Checkpoint {
        mr_optimizer: AdamState::new(&nets.mr, AdamConfig { beta1: 0.8, ..Default::default() }),
        ar_optimizer,
        ar_config: nets.ar_config,
        mr_config: nets.mr_config,
        ar_params: nets.ar,
        mr_params: nets.mr,
        pass_index: 2,
        epoch: 7,
        val_snr_db: 2.718_281_9 + seed as f64 * 1e-9,
        master_seed: seed,
    }
}

fn integrity_detail(e: Error) -> String {
    assert_eq!(e.exit_code(), exit::DATA);
    match e {
        Error::Integrity { detail, .. } => detail,
        other => panic!("expected an integrity error, got {other}"),
    }
}

#[test]
fn dataset_round_trips_and_rewrites_identically() {
    let cfg = small_config(4);
    let d = synthesize(&cfg, &Split::ALL).unwrap();
    assert_eq!(d.test.len(), 12 * 2);
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let m = write_dataset(a.path(), &d, 4, None, None).unwrap();
    assert_eq!(m.total, 6 + 3 + 24);
    assert_eq!(m.master_seed, 4);
    assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (6, 3, 24));
    let (back, m2) = read_dataset(a.path()).unwrap();
    assert_eq!(back, d);
    assert_eq!(m2, m);

    let again = synthesize(&cfg, &Split::ALL).unwrap();
    write_dataset(b.path(), &again, 4, None, None).unwrap();
    for f in [RECORDS_FILE, datafile::MANIFEST_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::metadata(a.path().join(RECORDS_FILE)).unwrap().len() as usize, 33 * RECORD_BYTES);
}

#[test]
fn record_layout_is_little_endian_planar() {
    let d = synthesize(&small_config(1), &[Split::Train]).unwrap();
    let bytes = datafile::encode(&d);
    let r = &d.train.records[1];
    let rec = &bytes[RECORD_BYTES..2 * RECORD_BYTES];
    let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
    assert_eq!(u32::from_le_bytes(rec[..4].try_into().unwrap()), r.modulation.tag());
    assert_eq!(f(1), r.target_snr_db);
    assert_eq!(f(2), r.achieved_snr_db);
    assert_eq!(f(3), r.clean.i()[0]);
    assert_eq!(f(3 + 1024), r.clean.q()[0]);
    assert_eq!(f(3 + 2048 + 1023), r.corrupted.i()[1023]);
}

#[test]
fn damaged_datasets_are_rejected() {
    let d = synthesize(&small_config(2), &[Split::Train, Split::Val]).unwrap();
    let dir = tempdir().unwrap();
    write_dataset(dir.path(), &d, 2, None, None).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes[RECORD_BYTES + 100] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert!(integrity_detail(read_dataset(dir.path()).unwrap_err()).contains("sha256"));
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(integrity_detail(read_dataset(dir.path()).unwrap_err()).contains("bytes"));

    let mpath = dir.path().join(datafile::MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
    fs::write(&mpath, text).unwrap();
    assert!(matches!(read_dataset(dir.path()).unwrap_err(), Error::Version { found: 9, .. }));
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempdir().unwrap();
    let ckpt = checkpoint(9, 4);
    let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&ckpt, &p1).unwrap();
    let loaded = load_checkpoint(&p1).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(loaded.val_snr_db.to_bits(), ckpt.val_snr_db.to_bits());
    save_checkpoint(&loaded, &p2).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    assert!(!dir.path().join("a.ckpt.tmp").exists());
}

fn rewrite_version(bytes: &mut [u8], v: u32) {
    bytes[8..12].copy_from_slice(&v.to_le_bytes());
}

#[test]
fn wrong_version_is_rejected() {
    let mut bytes = encode(&checkpoint(1, 4)).unwrap();
    rewrite_version(&mut bytes, 2);
    let e = decode(&bytes, Path::new("x.ckpt")).unwrap_err();
    assert!(matches!(e, Error::Version { found: 2, expected: 1, .. }), "{e}");
    assert_eq!(e.exit_code(), exit::DATA);
}

#[test]
fn damage_is_located() {
    let ckpt = checkpoint(3, 4);
    let bytes = encode(&ckpt).unwrap();
    let p = Path::new("x.ckpt");
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let blob = 20 + header_len;

    let mut flipped = bytes.clone();
    flipped[blob + 4 * 10] ^= 1;
    let d = integrity_detail(decode(&flipped, p).unwrap_err());
    let first = ckpt.ar_params.iter().next().unwrap();
    assert!(d.contains(&format!("ar/{}", first.0)), "{d}");
    assert!(d.contains(&format!("[{blob}, ")), "{d}");

    let last = bytes.len() - 2;
    let mut flipped = bytes.clone();
    flipped[last] ^= 0x10;
    let d = integrity_detail(decode(&flipped, p).unwrap_err());
    assert!(d.contains("mr.adam.v/head.b"), "{d}");

    let d = integrity_detail(decode(&bytes[..bytes.len() - 3], p).unwrap_err());
    assert!(d.contains(&format!("at byte {blob}")), "{d}");

    let mut header = bytes.clone();
    header[20 + 1] = b'#';
    let d = integrity_detail(decode(&header, p).unwrap_err());
    assert!(d.contains("near byte 21"), "{d}");

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(integrity_detail(decode(&magic, p).unwrap_err()).contains("magic"));
    assert!(integrity_detail(decode(&bytes[..10], p).unwrap_err()).contains("preamble"));
    assert_eq!(&bytes[..8], MAGIC);
}

#[test]
fn mismatched_layout_is_an_integrity_error() {
    let mut ckpt = checkpoint(5, 4);
    ckpt.ar_config = ArConfig::uniform(8);
    let d = integrity_detail(decode(&encode(&ckpt).unwrap(), Path::new("x")).unwrap_err());
    assert!(d.contains("does not match") || d.contains("expected"), "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>(), width in 1usize..5, snr in -1e3f64..1e3) {
        let mut ckpt = checkpoint(seed, width);
        ckpt.val_snr_db = snr;
        let bytes = encode(&ckpt).unwrap();
        let (back, header) = decode(&bytes, Path::new("p")).unwrap();
        prop_assert_eq!(back.val_snr_db.to_bits(), snr.to_bits());
        prop_assert_eq!(header.param_counts, [ckpt.ar_params.param_count(), ckpt.mr_params.param_count()]);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
        prop_assert_eq!(back, ckpt);
    }
}
