use mimo_djscc::channel::ChannelConfig;
use mimo_djscc::data::synthetic_dataset;
use mimo_djscc::model::ImageShape;
use mimo_djscc::rng::{child_rng, rng_from};
use mimo_djscc::scheme::{image_mse, ChannelDraw, LinkPath, Scheme, System};
use mimo_djscc::nn::Tensor;
use rand::Rng as _;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-3;

fn system(scheme: Scheme) -> System {
    let image = ImageShape::new(3, 8, 8);
    let antennas = ChannelConfig::new(2, 2);
    let spec = scheme.model_spec(image, &antennas, 1.0 / 12.0, 4, 11).unwrap();
    System::new(scheme, antennas, spec).unwrap()
}

fn loss(sys: &System, image: &Tensor, draw: &ChannelDraw, path: LinkPath) -> f64 {
    let mut rng = rng_from(99);
    sys.forward(image, draw, path, &mut rng).unwrap().loss
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn check_params(scheme: Scheme, path: LinkPath) {
    let mut sys = system(scheme);
    let image = synthetic_dataset(1, sys.model.spec.image, 3).image(0);
    let draw = sys.sample_draw(10.0, &mut rng_from(5)).unwrap();
    let mut rng = rng_from(99);
    let trace = sys.forward(&image, &draw, path, &mut rng).unwrap();
    let mut grads = sys.model.params.zeros_like();
    sys.backward(&image, &trace, 1.0, &mut grads);

    let mut pick = child_rng(7, &[scheme as u64]);
    let mut checked = 0;
    let mut tries = 0;
    while checked < 12 {
        tries += 1;
        assert!(tries < 2000, "{scheme}: too few parameters with usable gradients");
        let i = pick.random_range(0..grads.len());
        if grads[i].abs() < 1e-6 {
            continue;
        }
        let orig = sys.model.params.values[i];
        sys.model.params.values[i] = orig + STEP;
        let up = loss(&sys, &image, &draw, path);
        sys.model.params.values[i] = orig - STEP;
        let down = loss(&sys, &image, &draw, path);
        sys.model.params.values[i] = orig;
        let fd = (up - down) / (2.0 * STEP);
        let err = rel_err(fd, grads[i]);
        assert!(err < TOL, "{scheme} param {i}: analytic {} vs fd {fd} (rel {err})", grads[i]);
        checked += 1;
    }
}

#[test]
fn serial_codec_matches_finite_differences() {
    check_params(Scheme::Serial, LinkPath::Equivalent);
}

#[test]
fn parallel_codec_matches_finite_differences() {
    check_params(Scheme::Parallel, LinkPath::Equivalent);
}

#[test]
fn full_path_matches_finite_differences() {
    check_params(Scheme::Serial, LinkPath::Full);
}

#[test]
fn baseline_codecs_match_finite_differences() {
    check_params(Scheme::Multiplexing, LinkPath::Equivalent);
    check_params(Scheme::Diversity, LinkPath::Equivalent);
}

#[test]
fn input_gradient_is_finite_nonzero_and_matches() {
    for scheme in [Scheme::Serial, Scheme::Parallel] {
        let sys = system(scheme);
        let target = synthetic_dataset(1, sys.model.spec.image, 4).image(0);
        let mut image = target.clone();
        let draw = sys.sample_draw(10.0, &mut rng_from(6)).unwrap();
        let trace = sys.forward(&image, &draw, LinkPath::Equivalent, &mut rng_from(99)).unwrap();
        let mut grads = sys.model.params.zeros_like();
        let gx = sys.backward(&image, &trace, 1.0, &mut grads);
        assert!(gx.data.iter().all(|g| g.is_finite()));
        assert!(gx.data.iter().any(|g| g.abs() > 0.0));
        for i in [0, 17, 63, 100, 191] {
            let orig = image.data[i];
            // The reconstruction target stays fixed; only the encoder input moves.
            image.data[i] = orig + STEP;
            let up = image_mse(&target, &sys.reconstruct(&image, &draw, &mut rng_from(99)).unwrap());
            image.data[i] = orig - STEP;
            let down = image_mse(&target, &sys.reconstruct(&image, &draw, &mut rng_from(99)).unwrap());
            image.data[i] = orig;
            let fd = (up - down) / (2.0 * STEP);
            assert!(rel_err(fd, gx.data[i]) < TOL, "{scheme} pixel {i}: {} vs {fd}", gx.data[i]);
        }
    }
}
