use std::sync::OnceLock;

use diffscope::denoiser::{NoisePrediction, NoisePredictor};
use diffscope::image_decoder::decode_png;
use diffscope::pipeline::{
    deserialize_trajectory, generate, initial_latent, sample, serialize_trajectory, Engine,
    GenerationConfig, WeightOverrides, ENGINE_VERSION, MAGIC,
};
use diffscope::scheduler::build_sigma_schedule;
use diffscope::text_encoder::TextRepresentation;
use diffscope::{Error, Tensor, Trajectory};

fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| Engine::new_default().unwrap())
}

fn debug_trajectory() -> Trajectory {
    let cfg = GenerationConfig::new("a cute and adorable bunny", 5, 7.0)
        .unwrap()
        .with_steps(3)
        .unwrap();
    generate(engine(), &cfg).unwrap()
}

#[test]
fn debug_trajectory_round_trips() {
    let t = debug_trajectory();
    assert_eq!(t.frames.len(), 4);
    let bytes = serialize_trajectory(&t);
    let back = deserialize_trajectory(&bytes).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.config.trajectory_id(&back.engine_version), back.id);
    assert_eq!(serialize_trajectory(&back), bytes);

    let stamped = Trajectory {
        created_at: Some(1_700_000_000),
        ..t.clone()
    };
    assert_eq!(deserialize_trajectory(&serialize_trajectory(&stamped)).unwrap(), stamped);
}

#[test]
fn corrupt_files_are_rejected() {
    let bytes = serialize_trajectory(&debug_trajectory());
    let expect_format = |b: &[u8]| {
        assert!(matches!(deserialize_trajectory(b), Err(Error::Format { .. })));
    };
    expect_format(&bytes[..bytes.len() - 1]);
    expect_format(&bytes[..20]);
    expect_format(b"");
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    expect_format(&flipped);
    let mut magic = bytes.clone();
    magic[0] = b'X';
    expect_format(&magic);
    let mut version = bytes.clone();
    version[MAGIC.len()] = 9;
    match deserialize_trajectory(&version) {
        Err(e) => assert!(e.to_string().contains("version 9"), "{e}"),
        Ok(_) => panic!("version mismatch accepted"),
    }
}

#[test]
fn frame_contract_on_default_config() {
    let cfg = GenerationConfig::new("a cute and adorable bunny, pixar character", 1, 7.0).unwrap();
    let t = generate(engine(), &cfg).unwrap();
    let schedule = build_sigma_schedule(50).unwrap();
    assert_eq!(t.frames.len(), 51);
    assert_eq!(t.id, cfg.trajectory_id(ENGINE_VERSION));
    assert!(t.frames[0].noise.is_none() && t.frames[0].noise_previews.is_none());
    for (i, f) in t.frames.iter().enumerate() {
        assert_eq!(f.timestep, i);
        assert_eq!(f.sigma, schedule.sigmas()[i]);
        assert_eq!(f.latent.shape(), &[4, 8, 8]);
        assert_eq!(decode_png(&f.preview_png).unwrap().0, 8);
        if i > 0 {
            assert!(f.noise.is_some());
            assert_eq!(f.noise_previews.as_ref().unwrap().len(), 3);
        }
    }
    assert_eq!(t.frames[50].sigma, 0.0);
    let (w, h, _) = decode_png(&t.final_image).unwrap();
    assert_eq!((w, h), (64, 64));
    let size = serialize_trajectory(&t).len();
    assert!(size < 5 * 1024 * 1024, "{size} bytes");
}

#[test]
fn byte_fallback_accepts_any_prompt() {
    let cfg = GenerationConfig::new("\u{E000} \u{0} bunny \u{1F430}", 1, 7.0)
        .unwrap()
        .with_steps(1)
        .unwrap();
    let t = generate(engine(), &cfg).unwrap();
    assert!(t.token_ids.length > 3);
}

#[test]
fn loaded_weights_change_the_engine_version() {
    let bytes = engine().denoiser().to_bytes();
    let e = Engine::with_weights(WeightOverrides {
        denoiser: Some(&bytes),
        ..Default::default()
    })
    .unwrap();
    assert_ne!(e.version(), ENGINE_VERSION);
    assert_eq!(e.denoiser(), engine().denoiser());
    assert!(Engine::with_weights(WeightOverrides {
        decoder: Some(&bytes),
        ..Default::default()
    })
    .is_err());
}

struct Oracle(Tensor);

impl NoisePredictor for Oracle {
    fn predict(&self, x: &Tensor, sigma: f64, _: &TextRepresentation) -> diffscope::Result<NoisePrediction> {
        let data = x
            .data()
            .iter()
            .zip(self.0.data())
            .map(|(&x, &t)| ((f64::from(x) - f64::from(t)) / sigma) as f32)
            .collect();
        Ok(NoisePrediction {
            eps: Tensor::new(x.shape().to_vec(), data)?,
        })
    }
}

#[test]
fn oracle_denoiser_reaches_target() {
    let target = Tensor::from_fn(&[4, 8, 8], |i| ((i as f32) * 0.37).sin()).unwrap();
    let schedule = build_sigma_schedule(50).unwrap();
    let text = engine().text_encoder().unconditional(engine().tokenizer()).unwrap();
    let x0 = initial_latent(engine(), 3, schedule.sigma_max()).unwrap();
    let steps = sample(&Oracle(target.clone()), &schedule, x0, text, text, 7.0).unwrap();
    let err = steps.last().unwrap().latent.l2_distance(&target).unwrap();
    assert!(err <= 1e-3 * target.l2_norm(), "{err}");
}

#[test]
fn debug_trajectory_golden_digest() {
    use sha2::{Digest, Sha256};
    let digest = hex::encode(Sha256::digest(serialize_trajectory(&debug_trajectory())));
    assert_eq!(digest, "1a397c208be0bfb8579458dbb7260fcbf080b4cd88658c10618b24520ffec572");
}
