use diffscope::numerics::Tensor;
use diffscope::text_encoder::{encode_tokens, init_encoder, EncoderConfig, EncoderWeights};
use diffscope::tokenizer::{load_vocabulary, TokenSequence, Tokenizer};
use diffscope::nn::Params;
use sha2::{Digest, Sha256};

const MINI_VOCAB: &str = "<|startoftext|> 0\n<|endoftext|> 1\na</w> 2\nb</w> 3\nab</w> 4\na 5\nb 6\n";

fn mini_config(context_len: usize) -> EncoderConfig {
    EncoderConfig {
        context_len,
        ..EncoderConfig::with_vocab(7)
    }
}

fn seq(ids: &[u32]) -> TokenSequence {
    let length = ids.iter().position(|&i| i == 1).unwrap() + 1;
    TokenSequence {
        ids: ids.to_vec(),
        length,
    }
}

#[test]
fn default_shape() {
    let tok = Tokenizer::clip();
    let w = init_encoder(0, EncoderConfig::with_vocab(tok.vocab().len())).unwrap();
    let r = encode_tokens(&tok.encode("a cute and adorable bunny").unwrap(), &w).unwrap();
    assert_eq!(r.vectors.shape(), &[77, 64]);
}

#[test]
fn causal_prefix_is_unchanged_by_suffix_edits() {
    let w = init_encoder(3, mini_config(8)).unwrap();
    let a = encode_tokens(&seq(&[0, 2, 3, 4, 1, 1, 1, 1]), &w).unwrap();
    let b = encode_tokens(&seq(&[0, 2, 3, 6, 5, 1, 1, 1]), &w).unwrap();
    let d = 64;
    assert_eq!(&a.vectors.data()[..3 * d], &b.vectors.data()[..3 * d]);
    assert_ne!(&a.vectors.data()[3 * d..4 * d], &b.vectors.data()[3 * d..4 * d]);
}

#[test]
fn seed_7_parameter_mean_is_centered() {
    let w = init_encoder(7, EncoderConfig::with_vocab(49408)).unwrap();
    let mut sum = 0.0f64;
    let mut n = 0usize;
    let mut sum_sq = 0.0f64;
    w.visit("", &mut |name, t: &Tensor| {
        // Norm gains are 1 and biases 0 by construction; only random tensors count.
        if name.contains("ln") || name.ends_with("bias") {
            return;
        }
        for &v in t.data() {
            sum += f64::from(v);
            sum_sq += f64::from(v) * f64::from(v);
            n += 1;
        }
    });
    let mean = sum / n as f64;
    let sd = (sum_sq / n as f64 - mean * mean).sqrt();
    assert!((sd - 0.02).abs() < 1e-3, "sd {sd}");
    assert!(mean.abs() < 3.0 * 0.02 / (n as f64).sqrt(), "mean {mean} over {n}");
}

#[test]
fn unknown_token_id_is_rejected() {
    let w = init_encoder(0, mini_config(4)).unwrap();
    assert!(encode_tokens(&seq(&[0, 7, 1, 1]), &w).is_err());
    assert!(encode_tokens(&seq(&[0, 1, 1]), &w).is_err());
}

// Straight-line f64 evaluation of the whole encoder.
fn reference_encode(ids: &[u32], w: &EncoderWeights) -> Vec<f64> {
    let cfg = w.config;
    let (n, d, heads) = (ids.len(), cfg.d_model, cfg.n_heads);
    let hd = d / heads;
    let f = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
    let tok = f(&w.token_embedding);
    let pos = f(&w.position_embedding);
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|j| tok[ids[i] as usize * d + j] + pos[i * d + j]).collect())
        .collect();
    let ln = |row: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let m = row.iter().sum::<f64>() / row.len() as f64;
        let v = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / row.len() as f64;
        row.iter()
            .enumerate()
            .map(|(j, x)| (x - m) / (v + 1e-5).sqrt() * g[j] + b[j])
            .collect()
    };
    let lin = |row: &[f64], wt: &[f64], b: &[f64]| -> Vec<f64> {
        (0..b.len())
            .map(|o| b[o] + (0..row.len()).map(|i| wt[o * row.len() + i] * row[i]).sum::<f64>())
            .collect()
    };
    for layer in &w.layers {
        let p = |l: &diffscope::nn::Linear| (f(&l.weight), f(&l.bias));
        let (g, b) = (f(&layer.ln_attn.gain), f(&layer.ln_attn.bias));
        let h: Vec<Vec<f64>> = x.iter().map(|r| ln(r, &g, &b)).collect();
        let (qw, qb) = p(&layer.attn.q);
        let (kw, kb) = p(&layer.attn.k);
        let (vw, vb) = p(&layer.attn.v);
        let (ow, ob) = p(&layer.attn.out);
        let q: Vec<Vec<f64>> = h.iter().map(|r| lin(r, &qw, &qb)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|r| lin(r, &kw, &kb)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|r| lin(r, &vw, &vb)).collect();
        for i in 0..n {
            let mut ctx = vec![0.0; d];
            for hh in 0..heads {
                let r = hh * hd..(hh + 1) * hd;
                let scores: Vec<f64> = (0..=i)
                    .map(|j| {
                        r.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (hd as f64).sqrt()
                    })
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, ej) in e.iter().enumerate() {
                    for c in r.clone() {
                        ctx[c] += ej / z * v[j][c];
                    }
                }
            }
            let o = lin(&ctx, &ow, &ob);
            for c in 0..d {
                x[i][c] += o[c];
            }
        }
        let (g, b) = (f(&layer.ln_mlp.gain), f(&layer.ln_mlp.bias));
        let (iw, ib) = p(&layer.fc_in);
        let (fw, fb) = p(&layer.fc_out);
        for row in x.iter_mut() {
            let hidden: Vec<f64> = lin(&ln(row, &g, &b), &iw, &ib)
                .into_iter()
                .map(|u| u / (1.0 + (-1.702 * u).exp()))
                .collect();
            let o = lin(&hidden, &fw, &fb);
            for c in 0..d {
                row[c] += o[c];
            }
        }
    }
    let (g, b) = (f(&w.final_ln.gain), f(&w.final_ln.bias));
    x.iter().flat_map(|r| ln(r, &g, &b)).collect()
}

fn perturbed(seed: u64, cfg: EncoderConfig) -> EncoderWeights {
    // Non-trivial norm parameters and biases so every term is exercised.
    let mut w = init_encoder(seed, cfg).unwrap();
    let mut k = 0u32;
    w.visit_mut("", &mut |_, t: &mut Tensor| {
        let shape = t.shape().to_vec();
        let data = t
            .data()
            .iter()
            .map(|&v| {
                k += 1;
                v * 20.0 + 0.1 * ((k % 7) as f32 - 3.0)
            })
            .collect();
        *t = Tensor::new(shape, data).unwrap();
    });
    w
}

#[test]
fn matches_straight_line_reference() {
    let cfg = EncoderConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        context_len: 6,
        vocab_size: 7,
    };
    let w = perturbed(11, cfg);
    let ids = [0, 5, 6, 2, 1, 1];
    let got = encode_tokens(&seq(&ids), &w).unwrap();
    let want = reference_encode(&ids, &w);
    for (g, e) in got.vectors.data().iter().zip(&want) {
        assert!((f64::from(*g) - e).abs() < 1e-4, "{g} vs {e}");
    }

    let w = perturbed(12, mini_config(6));
    let got = encode_tokens(&seq(&ids), &w).unwrap();
    let want = reference_encode(&ids, &w);
    for (g, e) in got.vectors.data().iter().zip(&want) {
        assert!((f64::from(*g) - e).abs() < 1e-4, "{g} vs {e}");
    }
}

#[test]
fn golden_output_seed_0_miniature_vocab() {
    let (vocab, merges) = load_vocabulary(MINI_VOCAB, "a b</w>\n").unwrap();
    let tok = Tokenizer::new(vocab, merges, 6).unwrap();
    let s = tok.encode("a").unwrap();
    assert_eq!(s.ids, vec![0, 2, 1, 1, 1, 1]);
    let w = init_encoder(0, mini_config(6)).unwrap();
    let out = encode_tokens(&s, &w).unwrap();
    let want = reference_encode(&s.ids, &w);
    for (g, e) in out.vectors.data().iter().zip(&want) {
        assert!((f64::from(*g) - e).abs() < 1e-5);
    }
    let digest = hex::encode(Sha256::digest(out.vectors.to_le_bytes()));
    assert_eq!(digest, "c219282214fde2433b9e4817f2837481e8e19e904112200bf545d9e14c76536f");
}
