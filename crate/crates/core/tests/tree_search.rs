use longvine::bicop::BivariateCopula;
use longvine::dvine::DVineModel;
use longvine::joint::presets::count_design;
use longvine::joint::{fit_stagewise, simulate_dataset};
use longvine::numerics::rng::child_seed;

#[test]
fn weak_top_tree_is_not_trapped_by_floored_rectangles() {
    let d = count_design();
    let data = simulate_dataset(
        &d.model,
        500,
        4,
        &d.covariates,
        child_seed(20_240_501, &[96]),
    )
    .unwrap();
    let (m, _) = fit_stagewise(&d.spec, &data, 0, 0).unwrap();
    let o = &m.outcomes()[1];
    let b = o.marginal.bind(data.schema()).unwrap();
    let trajs: Vec<Vec<_>> = (0..data.n_subjects())
        .map(|i| {
            (0..4)
                .map(|t| b.dist(data.row(i, 1, t)).cond(data.value(i, 1, t)))
                .collect()
        })
        .collect();
    let loglik = |theta: f64| {
        let mut trees = o.vine.trees().to_vec();
        trees[2] = BivariateCopula::new(trees[2].family(), theta).unwrap();
        let v = DVineModel::new(o.vine.scale(), trees);
        trajs.iter().map(|t| v.loglik(t)).sum::<f64>()
    };
    let fitted = o.vine.trees()[2].theta();
    let at_fit = loglik(fitted);
    for k in 0..300 {
        let theta = 1.0 + 1e-4 + 0.1 * k as f64;
        assert!(
            loglik(theta) <= at_fit + 1e-6,
            "theta {theta} beats fitted {fitted}"
        );
    }
    assert!(fitted < 3.0, "{fitted}");
}
