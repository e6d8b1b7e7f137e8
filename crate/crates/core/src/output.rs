//! CSV tables. Doubles are written with 17 significant digits, `.` decimal
//! separator and `\n` line endings.

use crate::error::Result;
use crate::exact::ConeFamily;
use crate::geometry::{compute_fields_2d, compute_fields_radial, GraphState2D, RadialProfile};
use crate::selfsimilar::SelfSimilarProfile;

/// Format a double with 17 significant digits (`NaN` for NaN).
pub fn fmt_sci(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn row(s: &mut String, vals: &[f64]) {
    for (k, v) in vals.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        s.push_str(&fmt_sci(*v));
    }
    s.push('\n');
}

pub const CONE_HEADER: &str = "t,alpha,beta,gamma,T";
pub const RADIAL_HEADER: &str = "t,r,u,H,v,omega_nu";
pub const LATTICE_HEADER: &str = "t,x1,x2,u,H,v";
pub const SELFSIM_HEADER: &str = "r,u,ur,flux_ratio";

/// `samples` equally spaced times on `[0, T]` (at least two).
pub fn cone_csv(cone: &ConeFamily, samples: usize) -> Result<String> {
    let life = cone.lifetime();
    let samples = samples.max(2);
    let mut s = format!("{CONE_HEADER}\n");
    for k in 0..samples {
        let t = if k + 1 == samples { life } else { life * k as f64 / (samples - 1) as f64 };
        let (gamma, beta) = cone.gamma_beta(t)?;
        row(&mut s, &[t, cone.slope(t)?, beta, gamma, life]);
    }
    Ok(s)
}

pub fn radial_csv(frames: &[RadialProfile]) -> String {
    let mut s = format!("{RADIAL_HEADER}\n");
    for p in frames {
        let fields = compute_fields_radial(p);
        for ((&r, &u), g) in p.grid.nodes().iter().zip(&p.u).zip(&fields.nodes) {
            row(&mut s, &[p.t, r, u, g.h, g.v, g.omega_nu]);
        }
    }
    s
}

pub fn lattice_csv(frames: &[GraphState2D]) -> String {
    let mut s = format!("{LATTICE_HEADER}\n");
    for st in frames {
        let fields = compute_fields_2d(st);
        let side = st.side();
        for j in 0..side {
            for i in 0..side {
                let k = st.index(i, j);
                let (x, y) = st.position(i, j);
                let g = &fields.nodes[k];
                row(&mut s, &[st.t, x, y, st.u[k], g.h, g.v]);
            }
        }
    }
    s
}

pub fn selfsim_csv(profile: &SelfSimilarProfile) -> String {
    let mut s = format!("{SELFSIM_HEADER}\n");
    for p in &profile.samples {
        row(&mut s, &[p.r, p.u, p.ur, p.flux_ratio()]);
    }
    s
}
