/// Capital recovery factor `r (1+r)^L / ((1+r)^L - 1)`.
///
/// Converts a one-off investment into an equivalent annual payment over `lifetime`
/// years at interest `rate`. A zero rate degenerates to straight-line `1 / L`.
pub fn annualization(rate: f64, lifetime: f64) -> f64 {
    if rate == 0.0 {
        return 1.0 / lifetime;
    }
    let growth = (1.0 + rate).powf(lifetime);
    rate * growth / (growth - 1.0)
}
