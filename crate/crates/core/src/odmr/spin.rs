use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CMat4 = [[Complex64; 4]; 4];

/// Bohr magneton over Planck's constant, MHz per gauss.
pub const BOHR_MHZ_PER_G: f64 = 1.399_624_493_61;

const JACOBI_TOL: f64 = 1e-12;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn zeros() -> CMat4 {
    [[ZERO; 4]; 4]
}

pub fn identity() -> CMat4 {
    let mut m = zeros();
    (0..4).for_each(|i| m[i][i] = c(1.0));
    m
}

pub fn matmul(a: &CMat4, b: &CMat4) -> CMat4 {
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn adjoint(a: &CMat4) -> CMat4 {
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

fn lincomb(terms: &[(f64, &CMat4)]) -> CMat4 {
    let mut out = zeros();
    for (s, m) in terms {
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += m[i][j] * *s;
            }
        }
    }
    out
}

/// Spin-3/2 operators `(Sx, Sy, Sz)` in the basis `m = 3/2, 1/2, -1/2, -3/2`.
pub fn spin_matrices() -> [CMat4; 3] {
    let ms = [1.5, 0.5, -0.5, -1.5];
    let s = 1.5;
    let mut sp = zeros();
    let mut sz = zeros();
    for (i, &m) in ms.iter().enumerate() {
        sz[i][i] = c(m);
        if i > 0 {
            // <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
            sp[i - 1][i] = c((s * (s + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let sm = adjoint(&sp);
    let mut sx = zeros();
    let mut sy = zeros();
    for i in 0..4 {
        for j in 0..4 {
            sx[i][j] = (sp[i][j] + sm[i][j]) * 0.5;
            sy[i][j] = (sp[i][j] - sm[i][j]) * Complex64::new(0.0, -0.5);
        }
    }
    [sx, sy, sz]
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian 4x4 matrix by
/// cyclic complex Jacobi rotations. The input is symmetrized first.
pub fn hermitian_eigen(m: &CMat4) -> ([f64; 4], CMat4) {
    let mut a = zeros();
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = (m[i][j] + m[j][i].conj()) * 0.5;
        }
    }
    let scale: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut v = identity();
    for _ in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                let b = a[p][q];
                if b.norm() == 0.0 {
                    continue;
                }
                // phase turns the pair real, then a real rotation zeroes it
                let phase = Complex64::from_polar(1.0, -b.arg());
                let theta = 0.5 * (2.0 * b.norm()).atan2(a[p][p].re - a[q][q].re);
                let (s, co) = theta.sin_cos();
                let mut u = identity();
                u[p][p] = c(co);
                u[p][q] = c(-s);
                u[q][p] = phase * s;
                u[q][q] = phase * co;
                a = matmul(&adjoint(&u), &matmul(&a, &u));
                v = matmul(&v, &u);
            }
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| a[i][i].re.total_cmp(&a[j][j].re));
    let mut vals = [0.0; 4];
    let mut vecs = zeros();
    for (k, &i) in order.iter().enumerate() {
        vals[k] = a[i][i].re;
        for r in 0..4 {
            vecs[r][k] = v[r][i];
        }
    }
    (vals, vecs)
}

/// Spin-3/2 center: `H = D Sz² + γ (B · S)` with `γ = g μB / h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystem {
    pub d_mhz: f64,
    #[serde(default = "default_g")]
    pub g_factor: f64,
    #[serde(default)]
    pub b_gauss: [f64; 3],
}

fn default_g() -> f64 {
    2.0
}

impl SpinSystem {
    pub fn new(d_mhz: f64, b_gauss: [f64; 3]) -> Self {
        Self {
            d_mhz,
            g_factor: 2.0,
            b_gauss,
        }
    }

    /// Gyromagnetic ratio, MHz/G.
    pub fn gyromag(&self) -> f64 {
        BOHR_MHZ_PER_G * self.g_factor
    }

    pub fn is_axial(&self) -> bool {
        self.b_gauss[0] == 0.0 && self.b_gauss[1] == 0.0
    }

    pub fn hamiltonian(&self) -> CMat4 {
        let [sx, sy, sz] = spin_matrices();
        let sz2 = matmul(&sz, &sz);
        let g = self.gyromag();
        let [bx, by, bz] = self.b_gauss;
        lincomb(&[
            (self.d_mhz, &sz2),
            (g * bx, &sx),
            (g * by, &sy),
            (g * bz, &sz),
        ])
    }
}

/// Energies in MHz, ascending.
pub fn eigenenergies(sys: &SpinSystem) -> [f64; 4] {
    hermitian_eigen(&sys.hamiltonian()).0
}

const MERGE_TOL_MHZ: f64 = 1e-9;

fn tidy(mut f: Vec<f64>) -> Vec<f64> {
    f.retain(|&x| x > MERGE_TOL_MHZ);
    f.sort_by(f64::total_cmp);
    f.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL_MHZ);
    f
}

/// `2D ± γBz` and `γBz` for a field along the symmetry axis.
pub fn axial_transitions(d_mhz: f64, gyromag: f64, bz_gauss: f64) -> Vec<f64> {
    let z = gyromag * bz_gauss;
    tidy(vec![
        (2.0 * d_mhz + z).abs(),
        (2.0 * d_mhz - z).abs(),
        z.abs(),
    ])
}

/// Δm = ±1 transitions from the numeric eigenbasis: level pairs with a non-negligible
/// transverse matrix element `|<i|Sx|j>|² + |<i|Sy|j>|²`.
pub fn numeric_transitions(sys: &SpinSystem) -> Vec<f64> {
    let (e, v) = hermitian_eigen(&sys.hamiltonian());
    let [sx, sy, _] = spin_matrices();
    let vd = adjoint(&v);
    let mx = matmul(&vd, &matmul(&sx, &v));
    let my = matmul(&vd, &matmul(&sy, &v));
    let mut out = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            let w = mx[i][j].norm_sqr() + my[i][j].norm_sqr();
            if w > 1e-6 {
                out.push(e[j] - e[i]);
            }
        }
    }
    tidy(out)
}

/// Resonance frequencies (MHz), ascending, zero-frequency lines dropped and coincident
/// lines merged. Axial fields use the closed form, others the numeric eigenbasis.
pub fn transition_frequencies(sys: &SpinSystem) -> Vec<f64> {
    if sys.is_axial() {
        axial_transitions(sys.d_mhz, sys.gyromag(), sys.b_gauss[2])
    } else {
        numeric_transitions(sys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn close(a: &CMat4, b: &CMat4, tol: f64) -> bool {
        (0..4).all(|i| (0..4).all(|j| (a[i][j] - b[i][j]).norm() < tol))
    }

    #[test]
    fn spin_algebra() {
        let [sx, sy, sz] = spin_matrices();
        let comm = lincomb(&[(1.0, &matmul(&sx, &sy)), (-1.0, &matmul(&sy, &sx))]);
        let mut isz = sz;
        isz.iter_mut().flatten().for_each(|z| *z *= Complex64::i());
        assert!(close(&comm, &isz, 1e-12));
        let cas = lincomb(&[
            (1.0, &matmul(&sx, &sx)),
            (1.0, &matmul(&sy, &sy)),
            (1.0, &matmul(&sz, &sz)),
        ]);
        let mut target = identity();
        target.iter_mut().flatten().for_each(|z| *z *= 3.75);
        assert!(close(&cas, &target, 1e-12));
        let diag: Vec<f64> = (0..4).map(|i| sz[i][i].re).collect();
        assert_eq!(diag, vec![1.5, 0.5, -0.5, -1.5]);
    }

    #[test]
    fn jacobi_reconstructs_random_matrices() {
        let mut rng = crate::core::RngSpec::new(5, 0).rng();
        for _ in 0..50 {
            let mut m = zeros();
            for i in 0..4 {
                for j in i..4 {
                    let z = if i == j {
                        c(rng.random_range(-50.0..50.0))
                    } else {
                        Complex64::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0))
                    };
                    m[i][j] = z;
                    m[j][i] = z.conj();
                }
            }
            let (e, v) = hermitian_eigen(&m);
            assert!(close(&matmul(&adjoint(&v), &v), &identity(), 1e-12));
            let mut d = zeros();
            (0..4).for_each(|i| d[i][i] = c(e[i]));
            assert!(close(&matmul(&v, &matmul(&d, &adjoint(&v))), &m, 1e-9));
            assert!(e.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn zero_field_levels() {
        let e = eigenenergies(&SpinSystem::new(35.0, [0.0; 3]));
        let expect = [8.75, 8.75, 78.75, 78.75];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(
            transition_frequencies(&SpinSystem::new(35.0, [0.0; 3])),
            vec![70.0]
        );
    }

    #[test]
    fn kramers_pairs_at_zero_field() {
        for d in [-20.0, 3.0, 35.0, 1000.0] {
            let e = eigenenergies(&SpinSystem::new(d, [0.0; 3]));
            assert!((e[0] - e[1]).abs() < 1e-9 && (e[2] - e[3]).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_zeeman() {
        let sys = SpinSystem::new(0.0, [0.0, 0.0, 10.0]);
        let g = sys.gyromag();
        let e = eigenenergies(&sys);
        for (a, m) in e.iter().zip([-1.5, -0.5, 0.5, 1.5]) {
            assert!((a - m * g * 10.0).abs() < 1e-9);
            // the nominal 2.80 MHz/G rounding
            assert!((a - m * 2.80 * 10.0).abs() < 0.02);
        }
    }

    #[test]
    fn trace_is_five_d() {
        let mut rng = crate::core::RngSpec::new(6, 0).rng();
        for _ in 0..20 {
            let b = [
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            ];
            let e = eigenenergies(&SpinSystem::new(35.0, b));
            assert!((e.iter().sum::<f64>() - 175.0).abs() < 1e-9);
        }
    }

    #[test]
    fn axial_closed_form_examples() {
        let sys = SpinSystem::new(35.0, [0.0, 0.0, 10.0]);
        let f = transition_frequencies(&sys);
        let g = sys.gyromag();
        assert_eq!(f.len(), 3);
        for (a, b) in f.iter().zip([10.0 * g, 70.0 - 10.0 * g, 70.0 + 10.0 * g]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in f.iter().zip([28.0, 42.0, 98.0]) {
            assert!((a - b).abs() < 0.02);
        }
        assert_eq!(
            transition_frequencies(&SpinSystem::new(34.2, [0.0; 3])),
            vec![68.4]
        );
    }

    #[test]
    fn axial_matches_numeric() {
        for i in 0..=200 {
            let bz = 0.5 * i as f64;
            let sys = SpinSystem::new(35.0, [0.0, 0.0, bz]);
            let closed = axial_transitions(35.0, sys.gyromag(), bz);
            let numeric = numeric_transitions(&sys);
            assert_eq!(closed.len(), numeric.len(), "Bz = {bz}");
            for (a, b) in closed.iter().zip(&numeric) {
                assert!((a - b).abs() < 1e-9, "Bz = {bz}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn outer_line_slopes() {
        let sys = SpinSystem::new(35.0, [0.0; 3]);
        let g = sys.gyromag();
        let h = 1e-3;
        let at = |bz: f64| axial_transitions(35.0, g, bz);
        // above 0 the ordering is (γB, 2D - γB, 2D + γB) while γB < D
        let (lo, hi) = (at(10.0 - h), at(10.0 + h));
        let slope_minus = (hi[1] - lo[1]) / (2.0 * h);
        let slope_plus = (hi[2] - lo[2]) / (2.0 * h);
        assert!((slope_plus - g).abs() < 1e-6);
        assert!((slope_minus + g).abs() < 1e-6);
        assert!((g - 2.80).abs() < 0.001);
    }

    #[test]
    fn rotation_about_z_preserves_levels() {
        let mut rng = crate::core::RngSpec::new(7, 0).rng();
        let b = [12.0, -5.0, 20.0];
        let base = eigenenergies(&SpinSystem::new(35.0, b));
        for _ in 0..10 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, co) = phi.sin_cos();
            let rb = [co * b[0] - s * b[1], s * b[0] + co * b[1], b[2]];
            let e = eigenenergies(&SpinSystem::new(35.0, rb));
            for (x, y) in e.iter().zip(&base) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn transverse_field_uses_numeric_path() {
        let sys = SpinSystem::new(35.0, [5.0, 0.0, 0.0]);
        let f = transition_frequencies(&sys);
        assert!(!f.is_empty());
        let e = eigenenergies(&sys);
        for x in f {
            assert!((0..4).any(|i| (i + 1..4).any(|j| (e[j] - e[i] - x).abs() < 1e-9)));
        }
    }
}
