//! Cross-module integration: config text -> seeded parameters -> checkpoint
//! round trip -> offline and streamed inference, plus batch padding with
//! per-element masks.

use chunkwise_core::attention::mhsa;
use chunkwise_core::encoder::{
    encoder_forward, init_encoder, load_checkpoint, save_checkpoint, EncoderConfig,
};
use chunkwise_core::layout::{pad_batch, ChunkLayout, SamplingPlan};
use chunkwise_core::masks::{batched_masks, AttnMask, MaskKind};
use chunkwise_core::stream::{stream_flush, stream_push, StreamMode, StreamState};
use chunkwise_core::Tensor;

const CONFIG_TEXT: &str = "\
# desk-scale encoder
input_dim=10
d_model=16
n_heads=4
block_pairs=2
chunk_size=8
kernel_size=7
right_mask=3
lambda=0.7
ff_expansion=2
eps=1e-5
seed=99
block_pattern=interleaved
";

#[test]
fn config_checkpoint_forward_stream_round_trip() {
    let config = EncoderConfig::from_key_value_str(CONFIG_TEXT).unwrap();
    assert_eq!(config.chunk_size, 8);
    assert_eq!(config.to_key_value_string().lines().count(), 12);

    let params = init_encoder::<f64>(&config).unwrap();
    let path = std::env::temp_dir().join(format!("chunkwise-pipeline-{}.ckpt", std::process::id()));
    save_checkpoint(&params, &path).unwrap();
    let reloaded = load_checkpoint::<f64>(&path, &config).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(params, reloaded);

    // Offline forward with original and reloaded parameters is bit-identical.
    let x = Tensor::<f64>::seeded(&[20, config.input_dim], 500, 1.0);
    let offline = encoder_forward(&x, &params, &config, 20).unwrap();
    let offline_reloaded = encoder_forward(&x, &reloaded, &config, 20).unwrap();
    assert_eq!(offline, offline_reloaded);

    // Streaming the same frames (recompute mode) reproduces offline prefixes,
    // and the flush emits exactly the leftover rows.
    let mut state = StreamState::new(StreamMode::Recompute, &config).unwrap();
    let mut emitted = Vec::new();
    for c in 0..2usize {
        let chunk = x.slice_rows(c * 8, (c + 1) * 8);
        emitted.push(stream_push(&mut state, &params, &config, &chunk).unwrap());
    }
    let tail = stream_flush(&mut state, &params, &config, &x.slice_rows(16, 20)).unwrap();
    assert_eq!(tail.nrows(), 4);
    assert_eq!(tail, offline.slice_rows(16, 20));
    let prefix16 = encoder_forward(&x.slice_rows(0, 16), &params, &config, 16).unwrap();
    assert_eq!(emitted[1], prefix16.slice_rows(8, 16));
}

#[test]
fn padded_batches_get_per_element_masks_and_zero_padded_outputs() {
    let w = 4usize;
    let a = Tensor::<f64>::seeded(&[12, 6], 501, 1.0);
    let b = Tensor::<f64>::seeded(&[9, 6], 502, 1.0);
    let (batch, lengths) = pad_batch(&[a, b], w).unwrap();
    assert_eq!(batch.shape(), &[2, 12, 6]);
    assert_eq!(lengths, vec![12, 9]);

    let masks = batched_masks(12, w, &lengths, MaskKind::Ssc).unwrap();
    let params = chunkwise_core::attention::MhsaParams::<f64>::seeded(6, 2, 503).unwrap();
    for (elem, mask) in masks.iter().enumerate() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| batch.data()[(elem * 12 + i) * 6..(elem * 12 + i + 1) * 6].to_vec())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let (out, macs) = mhsa(&x, &params, mask).unwrap();
        assert!(out.all_finite());
        // Chunk-scoped attention never computes cross-chunk scores.
        assert_eq!(macs.qk_scores, (3 * w * w * 6) as u64);
        for q in lengths[elem]..12 {
            assert!(out.row(q).iter().all(|&v| v == 0.0), "element {elem} row {q}");
        }
    }

    // Rebuilding with a different chunk size gives a freshly shaped mask set.
    let remasked = batched_masks(12, 6, &lengths, MaskKind::Chunk).unwrap();
    assert!(remasked[0].admissible(0, 5));
    assert!(!masks[0].admissible(0, 5));
}

#[test]
fn ssc_attention_equals_explicit_gather_compute_scatter() {
    // The documented batching trick: permute rows with the plan, run
    // chunk-local attention in permuted order, permute back. The mask-driven
    // path must agree with it bit-exactly.
    use chunkwise_core::layout::{apply_plan, PlanDirection};

    let layout = ChunkLayout::new(12, 4).unwrap();
    let plan = SamplingPlan::new(&layout);
    let params = chunkwise_core::attention::MhsaParams::<f64>::seeded(4, 2, 504).unwrap();
    let x = Tensor::<f64>::seeded(&[12, 4], 505, 1.0);

    let ssc = AttnMask::ssc(&layout, &plan, 12);
    let (direct, _) = mhsa(&x, &params, &ssc).unwrap();

    // Explicit pipeline: gather, attend within contiguous blocks, scatter.
    let gathered = apply_plan(&x, &plan, PlanDirection::Gather).unwrap();
    let permuted_layout = ChunkLayout::new(12, 4).unwrap();
    // In permuted coordinates each sampled chunk is one contiguous chunk; its
    // admissibility comes from the per-chunk stack of the original mask.
    let stack = ssc.per_chunk_stack().unwrap();
    let q_t = chunkwise_core::tensor::matmul(&gathered, &params.w_q).unwrap();
    let k_t = chunkwise_core::tensor::matmul(&gathered, &params.w_k).unwrap();
    let v_t = chunkwise_core::tensor::matmul(&gathered, &params.w_v).unwrap();
    let mut heads = Tensor::<f64>::zeros(&[12, 4]);
    for (chunk, block_bits) in stack.iter().enumerate() {
        let rows: Vec<usize> = permuted_layout.chunk_range(chunk).collect();
        for (qi_local, &q) in rows.iter().enumerate() {
            let mut scores = vec![0.0f64; rows.len()];
            let admit: Vec<bool> = (0..rows.len())
                .map(|k| block_bits[qi_local * rows.len() + k])
                .collect();
            for h in 0..2usize {
                let lo = h * 2;
                for (s, &k) in scores.iter_mut().zip(&rows) {
                    let mut dot = 0.0;
                    for d in 0..2 {
                        dot += q_t.row(q)[lo + d] * k_t.row(k)[lo + d];
                    }
                    *s = dot / (2.0f64).sqrt();
                }
                chunkwise_core::tensor::softmax_row_in_place(&mut scores, &admit);
                for (&p, &k) in scores.iter().zip(&rows) {
                    for d in 0..2 {
                        heads.row_mut(q)[lo + d] += p * v_t.row(k)[lo + d];
                    }
                }
            }
        }
    }
    let mixed = chunkwise_core::tensor::matmul(&heads, &params.w_o).unwrap();
    let scattered = apply_plan(&mixed, &plan, PlanDirection::Scatter).unwrap();
    assert!(direct.max_abs_diff(&scattered) <= 1e-12);
}
