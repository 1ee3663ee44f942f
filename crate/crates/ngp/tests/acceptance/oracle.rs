//! Independent oracles for the acceptance suite. These deliberately take
//! different algorithmic routes from the library: depth via per-pixel
//! ray-triangle intersection instead of rasterization, and the matrix square
//! root via Householder tridiagonalization + implicit-shift QL instead of
//! cyclic Jacobi.

use ngp::geometry::{Camera, TriangleMesh, Vec3};

/// Camera-space depth of the nearest triangle along each pixel-center ray;
/// 0 where nothing is hit.
pub fn ray_cast_depth(mesh: &TriangleMesh, cam: &Camera) -> Vec<f64> {
    let (w, h) = (cam.width, cam.height);
    let origin = cam.center();
    let mut out = vec![0.0f64; w * h];
    for py in 0..h {
        for px in 0..w {
            let u = px as f64 + 0.5;
            let v = py as f64 + 0.5;
            let dir_cam = Vec3 {
                x: (u - cam.cx()) / cam.fx(),
                y: (v - cam.cy()) / cam.fy(),
                z: 1.0,
            };
            let dir = cam.rotation.transpose().mul_vec(dir_cam);
            let mut best = f64::INFINITY;
            for tri in &mesh.triangles {
                let (a, b, c) = (
                    mesh.vertices[tri[0]],
                    mesh.vertices[tri[1]],
                    mesh.vertices[tri[2]],
                );
                if let Some(t) = moeller_trumbore(origin, dir, a, b, c) {
                    // camera depth of the hit: ray parameter times the
                    // camera-z of the unnormalized direction (= 1)
                    if t < best {
                        best = t;
                    }
                }
            }
            if best.is_finite() {
                out[py * w + px] = best;
            }
        }
    }
    out
}

/// Ray parameter of the intersection, if any. The direction is scaled so the
/// parameter equals camera-space depth directly.
fn moeller_trumbore(o: Vec3, d: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(p) * inv;
    if !(-EPS..=1.0 + EPS).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > 1e-6 {
        Some(t)
    } else {
        None
    }
}

/// Symmetric PSD square root through Householder + QL with implicit shifts.
pub fn sqrt_psd_oracle(m: &[f64], n: usize) -> Vec<f64> {
    let (eig, v) = eigen_symmetric_ql(m, n);
    let mut s = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[i * n + k] * eig[k].max(0.0).sqrt() * v[j * n + k];
            }
            s[i * n + j] = acc;
            s[j * n + i] = acc;
        }
    }
    s
}

/// Eigendecomposition of a symmetric matrix: Householder tridiagonalization
/// followed by implicit-shift QL sweeps. Returns (eigenvalues, V with
/// eigenvectors as columns).
pub fn eigen_symmetric_ql(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut a, &mut d, &mut e, n);
    tqli(&mut d, &mut e, &mut a, n);
    (d, a)
}

/// Householder reduction to tridiagonal form (accumulating transforms).
fn tred2(a: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let mut f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                f = 0.0;
                for j in 0..=l {
                    a[j * n + i] = a[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a[i * n + k] * a[k * n + j];
                }
                for k in 0..i {
                    a[k * n + j] -= g * a[k * n + i];
                }
            }
        }
        d[i] = a[i * n + i];
        a[i * n + i] = 1.0;
        for j in 0..i {
            a[j * n + i] = 0.0;
            a[i * n + j] = 0.0;
        }
    }
}

/// Implicit-shift QL on the tridiagonal, rotating the eigenvector columns.
fn tqli(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 50, "QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if r == 0.0 && m > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
