use crate::error::{Error, Result};
use crate::numkernel::ParamSet;

/// `θ_t ← μ·θ_t + (1−μ)·θ_s` for every teacher tensor, matched by name.
pub fn ema_update(teacher: &mut ParamSet, student: &ParamSet, mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Config(format!("EMA momentum {mu} outside [0, 1]")));
    }
    for name in teacher.names().to_vec() {
        let s = student
            .get(&name)
            .ok_or_else(|| Error::shape("ema_update", format!("student has no {name}")))?;
        let t = teacher.get_mut(&name).expect("own name");
        if !t.same_shape(s) {
            return Err(Error::shape(
                "ema_update",
                format!("{name}: teacher {:?} vs student {:?}", t.shape(), s.shape()),
            ));
        }
        for (a, b) in t.data_mut().iter_mut().zip(s.data()) {
            *a = mu * *a + (1.0 - mu) * b;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tensor;

    fn one(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::vector(vec![v, -v]));
        p
    }

    #[test]
    fn momentum_extremes_and_midpoint() {
        let mut t = one(1.0);
        ema_update(&mut t, &one(0.0), 1.0).unwrap();
        assert_eq!(t, one(1.0));
        ema_update(&mut t, &one(0.0), 0.99).unwrap();
        assert!((t.get("w").unwrap().data()[0] - 0.99).abs() < 1e-15);
        ema_update(&mut t, &one(0.25), 0.0).unwrap();
        assert_eq!(t, one(0.25));
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut t = one(1.0);
        let mut s = ParamSet::new();
        s.push("w", Tensor::vector(vec![0.0]));
        assert!(ema_update(&mut t, &s, 0.5).is_err());
        assert!(ema_update(&mut t, &ParamSet::new(), 0.5).is_err());
    }
}
