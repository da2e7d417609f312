//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::Zero;
use oracle::{decode, round, table, Fmt};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tent::dataset::{synth_dataset, synth_inputs};
use tent::fixture::{self, Variant, INPUT_SHAPE};
use tent_core::nn::{calibrate, fold_batchnorm, predict, quantize_model, FormatPolicy};
use tent_core::sim::{schedule_layer, simulate_model, ArrayConfig, CostTable, MemoryConfig};
use tent_core::{dot, select_params, Code, Format, FxpConfig, LayerStats, Quire, TfxConfig};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tfx(n: u32, is: u32, sc: i32) -> Format {
    TfxConfig::new(n, is, sc).unwrap().into()
}

fn code_at(signed: i32, n: u32) -> Code {
    Code::from_raw((signed as u32 & ((1 << n) - 1)) as u16)
}

fn format_exhaustives() -> Check {
    let start = Instant::now();
    let mut configs = 0;
    for n in 5..=8u32 {
        for is in 1..=n {
            for sc in -4..=0 {
                let cfg = TfxConfig::new(n, is, sc).unwrap();
                let f = Format::Tfx(cfg);
                let mut prev = None;
                for k in -(1i32 << (n - 1))..(1i32 << (n - 1)) {
                    let c = code_at(k, n);
                    ensure(cfg.pack(&cfg.unpack(c)).ok() == Some(c), || format!("{cfg}: pack(unpack({k})) differs"))?;
                    let v = f.value(c);
                    ensure(prev.is_none_or(|p| p < v), || format!("{cfg}: value order breaks at code {k}"))?;
                    prev = Some(v);
                    let back = f.quantize(f.to_real(c)).map_err(|e| e.to_string())?;
                    ensure(back == c, || format!("{cfg}: quantize(decode({k})) = {}", back.signed(n)))?;
                    ensure(f.quantize_exact(v) == c, || format!("{cfg}: exact requantize of {k}"))?;
                }
                configs += 1;
            }
        }
    }
    let took = start.elapsed();
    ensure(configs == 5 * (5 + 6 + 7 + 8), || format!("{configs} configs"))?;
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))
}

fn reference_encoding() -> Check {
    let f = tfx(8, 8, 0);
    let c = f.quantize(3.875).map_err(|e| e.to_string())?;
    ensure(c.bits() == 0b0111_0111, || format!("encoded as {:#010b}", c.bits()))?;
    ensure(f.to_real(c) == 3.875, || format!("decoded as {}", f.to_real(c)))?;
    ensure(decode(0b0111_0111, Fmt::Tfx { n: 8, is: 8, sc: 0 }) == oracle::from_f64(3.875), || "oracle disagrees".into())
}

fn dynamic_range_examples() -> Check {
    for (is, max, min) in [(1, 1.0, 0.0625), (2, 2.0, 0.125), (5, 5.0, 0.125)] {
        let base = tfx(5, is, 0).dynamic_range();
        ensure(base.max == max && base.min == min, || format!("IS={is}: {}/{}", base.max, base.min))?;
        for sc in -4..0 {
            let d = tfx(5, is, sc).dynamic_range();
            ensure(d.ratio() == max / min, || format!("IS={is} SC={sc}: ratio {}", d.ratio()))?;
        }
    }
    Ok(())
}

fn uniform_equivalence() -> Check {
    for n in 5..=8 {
        let t = tfx(n, 1, 0).enumerate_values();
        let f = Format::Fxp(FxpConfig::new(n, n - 1).unwrap()).enumerate_values();
        ensure(t == f, || format!("n={n}: value sets differ"))?;
        // Independently: k / 2^(n-1) for every signed k.
        let want: Vec<BigRational> = (-(1i64 << (n - 1))..(1i64 << (n - 1)))
            .map(|k| oracle::from_f64(k as f64) * oracle::pow2(1 - n as i32))
            .collect();
        let got: Vec<BigRational> = table(Fmt::Tfx { n, is: 1, sc: 0 }).into_iter().map(|(_, v)| v).collect();
        ensure(got == want, || format!("n={n}: oracle value set is not uniform"))?;
    }
    Ok(())
}

fn all_formats() -> Vec<Fmt> {
    let mut v = oracle::tfx_configs(2..=8);
    for n in 2..=8 {
        for frac in 1..n {
            v.push(Fmt::Fxp { n, frac });
        }
    }
    v
}

fn quire_correctness() -> Check {
    let formats = all_formats();
    let mut tables: HashMap<String, Vec<(u32, BigRational)>> = HashMap::new();
    let mut values: HashMap<String, Vec<BigRational>> = HashMap::new();
    let key = |f: &Fmt| format!("{f:?}");
    for f in &formats {
        let t = table(*f);
        let mut by_code = vec![BigRational::zero(); 1 << f.n()];
        for (b, v) in &t {
            by_code[*b as usize] = v.clone();
        }
        values.insert(key(f), by_code);
        tables.insert(key(f), t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xD07);
    let check = |fw: Fmt, fa: Fmt, fo: Fmt, w: &[u32], a: &[u32], trial: &str| -> Check {
        let (vw, va) = (&values[&key(&fw)], &values[&key(&fa)]);
        let mut exact = BigRational::zero();
        for (&x, &y) in w.iter().zip(a) {
            exact += &vw[x as usize] * &va[y as usize];
        }
        let want = round(&exact, &tables[&key(&fo)]);
        let (lw, la, lo) = (oracle::to_lib(fw), oracle::to_lib(fa), oracle::to_lib(fo));
        let wc: Vec<Code> = w.iter().map(|&b| Code::from_raw(b as u16)).collect();
        let ac: Vec<Code> = a.iter().map(|&b| Code::from_raw(b as u16)).collect();
        let got = dot(&wc, &ac, lw, la, lo).map_err(|e| format!("{trial}: {e}"))?;
        ensure(got.bits() as u32 == want, || format!("{trial}: {fw:?}.{fa:?} -> {fo:?} gave {:#b}, want {want:#b}", got.bits()))
    };

    for trial in 0..10_000 {
        let fw = *formats.choose(&mut rng).unwrap();
        let fa = *formats.choose(&mut rng).unwrap();
        let fo = *formats.choose(&mut rng).unwrap();
        let len = rng.random_range(0..=256);
        let w: Vec<u32> = (0..len).map(|_| rng.random_range(0..1u32 << fw.n())).collect();
        let a: Vec<u32> = (0..len).map(|_| rng.random_range(0..1u32 << fa.n())).collect();
        check(fw, fa, fo, &w, &a, &format!("random trial {trial}"))?;
    }

    // Every term at the largest magnitude, all with the same sign.
    for trial in 0..1_000 {
        let fw = *formats.choose(&mut rng).unwrap();
        let fa = *formats.choose(&mut rng).unwrap();
        let fo = *formats.choose(&mut rng).unwrap();
        let len = if trial % 4 == 0 { 256 } else { rng.random_range(1..=256) };
        let (lw, la) = (oracle::to_lib(fw), oracle::to_lib(fa));
        let wmin = lw.quantize(f64::NEG_INFINITY).unwrap().bits() as u32;
        let amin = la.quantize(f64::NEG_INFINITY).unwrap().bits() as u32;
        let amax = la.quantize(f64::INFINITY).unwrap().bits() as u32;
        let a_code = if rng.random() { amin } else { amax };
        let w = vec![wmin; len];
        let a = vec![a_code; len];
        let mut q = Quire::new(len, lw, la).map_err(|e| e.to_string())?;
        for (&x, &y) in w.iter().zip(&a) {
            q.mac(Code::from_raw(x as u16), Code::from_raw(y as u16), lw, la)
                .map_err(|e| format!("worst-case trial {trial}: {e}"))?;
        }
        ensure(q.acc().unsigned_abs() < 1u128 << (q.width() - 1), || format!("worst-case trial {trial}: quire overflow"))?;
        check(fw, fa, fo, &w, &a, &format!("worst-case trial {trial}"))?;
    }
    Ok(())
}

fn selection_examples() -> Check {
    let a = select_params(LayerStats { w_amax: 2.12, a_amax: 10.21 }, 8).map_err(|e| e.to_string())?;
    ensure((a.is_w, a.sc_w) == (3, 0), || format!("weights: IS={} SC={}", a.is_w, a.sc_w))?;
    ensure(a.is_a == 8, || format!("activations: IS={}", a.is_a))?;
    let b = select_params(LayerStats { w_amax: 0.3, a_amax: 1.0 }, 8).map_err(|e| e.to_string())?;
    ensure(b.sc_w == -1, || format!("w_amax 0.3: SC={}", b.sc_w))
}

fn fixture_comparison() -> Check {
    let start = Instant::now();
    let float = fold_batchnorm(&fixture::build(Variant::TinyConvnet, 0)).map_err(|e| e.to_string())?;
    let calib = calibrate(&float, &synth_inputs(0, 256, &INPUT_SHAPE)).map_err(|e| e.to_string())?;
    let data = synth_dataset(0, 1000, &float).map_err(|e| e.to_string())?;
    let float_preds = predict(&float, data.inputs()).map_err(|e| e.to_string())?;
    for n in 5..=8 {
        let t = quantize_model(&float, n, FormatPolicy::TfxAuto, &calib).map_err(|e| e.to_string())?;
        let f = quantize_model(&float, n, FormatPolicy::FxpAuto, &calib).map_err(|e| e.to_string())?;
        let weighted = t.layers().iter().filter(|l| l.op.weights().is_some()).count();
        let (tm, fm) = (t.layer_mse(), f.layer_mse());
        ensure(tm.len() == weighted && fm.len() == weighted, || format!("n={n}: {} mse entries", tm.len()))?;
        for (l, (a, b)) in tm.iter().zip(&fm).enumerate() {
            ensure(a <= b, || format!("n={n} layer {l}: tfx mse {a} > fxp mse {b}"))?;
        }
        if n == 8 {
            let agree = |q: &tent_core::nn::QuantizedModel| -> Result<usize, String> {
                let p = predict(q, data.inputs()).map_err(|e| e.to_string())?;
                Ok(p.iter().zip(&float_preds).filter(|(x, y)| x == y).count())
            };
            let (at, af) = (agree(&t)?, agree(&f)?);
            ensure(at >= af, || format!("agreement at n=8: tfx {at}/1000 < fxp {af}/1000"))?;
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))
}

fn simulator_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5114);
    for _ in 0..50 {
        let (m, k, n) = (rng.random_range(1..=512), rng.random_range(1..=2048), rng.random_range(1..=4096));
        let array = ArrayConfig { rows: rng.random_range(1..=64), cols: rng.random_range(1..=64) };
        let (cycles, _) = schedule_layer(m, k, n, array);
        let mut sum = 0u64;
        for _ in (0..m).step_by(array.rows) {
            for _ in (0..n).step_by(array.cols) {
                sum += (k + array.rows + array.cols - 2) as u64;
            }
        }
        ensure(cycles == sum, || format!("({m},{k},{n}) on {array:?}: {cycles} != {sum}"))?;
    }

    let float = fold_batchnorm(&fixture::build(Variant::Fashion, 0)).map_err(|e| e.to_string())?;
    let calib = calibrate(&float, &synth_inputs(0, 64, &INPUT_SHAPE)).map_err(|e| e.to_string())?;
    let mac_only = CostTable { sram_byte_j: 0.0, dram_byte_j: 0.0, tfx_mac_ratio: 1.25, ..CostTable::default() };
    let (array, mem) = (ArrayConfig::default(), MemoryConfig::default());
    for n in 5..=8 {
        let t = quantize_model(&float, n, FormatPolicy::TfxAuto, &calib).map_err(|e| e.to_string())?;
        let f = quantize_model(&float, n, FormatPolicy::FxpAuto, &calib).map_err(|e| e.to_string())?;
        let st = simulate_model(&t, array, mem, &mac_only, 200e6).map_err(|e| e.to_string())?;
        let sf = simulate_model(&f, array, mem, &mac_only, 200e6).map_err(|e| e.to_string())?;
        ensure(st.macs == float.macs() && t.macs() == float.macs(), || format!("n={n}: sim {} vs nn {}", st.macs, float.macs()))?;
        let ratio = st.edp / sf.edp;
        ensure((ratio - 1.25).abs() <= 1e-12, || format!("n={n}: EDP ratio {ratio}"))?;
    }
    Ok(())
}

fn sweep_once(model: &Path, out: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_tent"))
        .args(["sweep", "--model", model.to_str().unwrap(), "--seed", "0", "--out", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
    Ok((read("sweep.csv")?, read("sweep_layers.csv")?))
}

fn sweep_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = fixture::write(Variant::TinyConvnet, 0, &dir.path().join("model")).map_err(|e| e.to_string())?;
    let a = sweep_once(&model, &dir.path().join("a"))?;
    let b = sweep_once(&model, &dir.path().join("b"))?;
    ensure(!a.0.is_empty() && a.0.iter().filter(|&&c| c == b'\n').count() == 9, || "unexpected sweep.csv shape".into())?;
    ensure(a == b, || "sweep outputs differ between runs".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("format exhaustives", format_exhaustives),
        ("3.875 reference encoding", reference_encoding),
        ("dynamic range examples", dynamic_range_examples),
        ("uniform-mode equivalence", uniform_equivalence),
        ("quire against rational oracle", quire_correctness),
        ("format selection examples", selection_examples),
        ("fixture tfx vs fxp", fixture_comparison),
        ("simulator consistency", simulator_consistency),
        ("sweep determinism", sweep_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("AC{} PASS {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("AC{} FAIL {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
