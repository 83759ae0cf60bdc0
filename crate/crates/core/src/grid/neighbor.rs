use super::distance_km;

pub const SECTORS: usize = 8;

/// Azimuthal sector of `to` seen from `from`: sector 0 spans north ±22.5°,
/// numbering runs clockwise so due east is sector 2.
pub fn sector_of(from: (f64, f64), to: (f64, f64)) -> usize {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let bearing = dx.atan2(dy).to_degrees().rem_euclid(360.0);
    ((bearing + 22.5) / 45.0).floor() as usize % SECTORS
}

/// Per-sector means of the feature vectors of neighbours within `radius_km`
/// of `center`. Sectors without members take the centre's own features.
/// Output is sector-major, `SECTORS * center_features.len()` long.
pub fn neighbor_aggregate(
    center: (f64, f64),
    center_features: &[f64],
    others: &[((f64, f64), &[f64])],
    radius_km: f64,
) -> Vec<f64> {
    let width = center_features.len();
    let mut sums = vec![0.0; SECTORS * width];
    let mut counts = [0usize; SECTORS];
    for &(pos, feats) in others {
        if distance_km(center, pos) > radius_km {
            continue;
        }
        let s = sector_of(center, pos);
        counts[s] += 1;
        for (acc, v) in sums[s * width..(s + 1) * width].iter_mut().zip(feats) {
            *acc += v;
        }
    }
    for s in 0..SECTORS {
        let slot = &mut sums[s * width..(s + 1) * width];
        if counts[s] == 0 {
            slot.copy_from_slice(center_features);
        } else {
            slot.iter_mut().for_each(|v| *v /= counts[s] as f64);
        }
    }
    sums
}
