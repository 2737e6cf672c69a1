//! Fixed-step time loops that land exactly on requested times.

pub(crate) enum Event {
    Step(f64),
    Stop(usize),
}

/// Steps of at most `dt` that land exactly on every time in `stops` (sorted)
/// and on `t_end`. Returns the final time. Requires `t_end >= t0`.
pub(crate) fn drive<E>(
    t0: f64,
    t_end: f64,
    dt: f64,
    stops: &[f64],
    mut on: impl FnMut(Event) -> Result<(), E>,
) -> Result<f64, E> {
    debug_assert!(t_end >= t0);
    let tiny = 1e-9 * dt;
    let mut t = t0;
    let mut next = 0;
    while next < stops.len() && stops[next] < t0 - tiny {
        next += 1;
    }
    loop {
        while next < stops.len() && stops[next] <= t + tiny {
            on(Event::Stop(next))?;
            next += 1;
        }
        if t >= t_end - tiny {
            break;
        }
        let target = match stops.get(next) {
            Some(&s) if s < t_end => s,
            _ => t_end,
        };
        let remaining = target - t;
        if remaining <= dt * (1.0 + 1e-9) {
            on(Event::Step(remaining))?;
            t = target;
        } else {
            on(Event::Step(dt))?;
            t += dt;
        }
    }
    Ok(t.max(t_end))
}
