mod oracle;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use oracle::{decode, round, table, tfx_configs, Fmt};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tent_core::dot::{decode_operand, Quire};
use tent_core::{dot, Code};

fn random_code(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    rng.random_range(0..1u32 << n)
}

#[test]
fn dot_matches_rational_oracle() {
    let configs = tfx_configs(2..=8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1500 {
        let fw = *configs.choose(&mut rng).unwrap();
        let fa = *configs.choose(&mut rng).unwrap();
        let fo = *configs.choose(&mut rng).unwrap();
        let len = rng.random_range(0..=64);
        let w: Vec<u32> = (0..len).map(|_| random_code(&mut rng, fw.n())).collect();
        let a: Vec<u32> = (0..len).map(|_| random_code(&mut rng, fa.n())).collect();
        let mut exact = BigRational::zero();
        for (&wb, &ab) in w.iter().zip(&a) {
            exact += decode(wb, fw) * decode(ab, fa);
        }
        let want = round(&exact, &table(fo));
        let wc: Vec<Code> = w.iter().map(|&b| Code::from_raw(b as u16)).collect();
        let ac: Vec<Code> = a.iter().map(|&b| Code::from_raw(b as u16)).collect();
        let got = dot(&wc, &ac, oracle::to_lib(fw), oracle::to_lib(fa), oracle::to_lib(fo)).unwrap();
        assert_eq!(got.bits() as u32, want, "trial {trial}: {fw:?} {fa:?} -> {fo:?}");
    }
}

#[test]
fn dot_is_permutation_invariant() {
    let configs = tfx_configs(4..=8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let fw = oracle::to_lib(*configs.choose(&mut rng).unwrap());
        let fa = oracle::to_lib(*configs.choose(&mut rng).unwrap());
        let fo = oracle::to_lib(*configs.choose(&mut rng).unwrap());
        let len = rng.random_range(1..=64);
        let mut pairs: Vec<(Code, Code)> = (0..len)
            .map(|_| {
                (
                    Code::from_raw(random_code(&mut rng, fw.bits()) as u16),
                    Code::from_raw(random_code(&mut rng, fa.bits()) as u16),
                )
            })
            .collect();
        let (w, a): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let before = dot(&w, &a, fw, fa, fo).unwrap();
        pairs.shuffle(&mut rng);
        let (w, a): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        assert_eq!(dot(&w, &a, fw, fa, fo).unwrap(), before);
    }
}

#[test]
fn decoded_numerator_is_exact() {
    for fmt in tfx_configs(2..=8) {
        let lib = oracle::to_lib(fmt);
        for b in 0..1u32 << fmt.n() {
            let d = decode_operand(Code::from_raw(b as u16), lib);
            let v = BigRational::from_integer(BigInt::from(d.signed())) * oracle::pow2(-(d.frac_places as i32));
            assert_eq!(v, decode(b, fmt));
        }
    }
}

#[test]
fn quire_width_holds_at_extremes() {
    // Every product at the largest-magnitude pair, for each declared count.
    for fw in tfx_configs(2..=8) {
        for fa in [Fmt::Tfx { n: 8, is: 8, sc: 0 }, Fmt::Tfx { n: 5, is: 1, sc: -4 }, fw] {
            let (lw, la) = (oracle::to_lib(fw), oracle::to_lib(fa));
            let wn = lw.quantize(f64::NEG_INFINITY).unwrap();
            let an = la.quantize(f64::NEG_INFINITY).unwrap();
            for m in [1usize, 2, 3, 17, 64, 255, 256] {
                let mut q = Quire::new(m, lw, la).unwrap();
                for _ in 0..m {
                    q.mac(wn, an, lw, la).unwrap();
                }
                assert!(q.acc().unsigned_abs() < 1u128 << (q.width() - 1));
            }
        }
    }
}
