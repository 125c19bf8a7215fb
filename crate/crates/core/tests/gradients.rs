//! Autodiff against central differences, one op at a time and for whole
//! models.

use sgfuse_core::model::{
    gradcheck_config, gradcheck_instance, model_gradcheck, FusionVariant, Model, Stochastic,
    GRADCHECK_TOL,
};
use sgfuse_core::numkit::gradcheck::{compare, numeric_grads};
use sgfuse_core::numkit::rng::uniform_init;
use sgfuse_core::numkit::{Bound, DropoutKey, NumError, ParamStore, Tape, Var};
use sgfuse_core::Mode;

const EPS: f64 = 1e-5;

/// Builds `Σ w ⊙ f(inputs)` with fixed pseudo-random `w`, then compares its
/// gradients. Returns the worst relative error.
fn check(
    inputs: &[(&str, &[usize])],
    f: impl Fn(&mut Tape, &Bound) -> Result<Var, NumError>,
) -> f64 {
    let mut store = ParamStore::new();
    for (i, (name, shape)) in inputs.iter().enumerate() {
        store.insert(name, uniform_init(shape, 1, 40 + i as u64, name));
    }
    let run = |s: &ParamStore, trainable: bool| {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape, trainable);
        let out = f(&mut tape, &bound)?;
        let shape = tape.value(out).shape().to_vec();
        let w = tape.constant(uniform_init(&shape, 1, 7, "weights"));
        let prod = tape.mul(out, w)?;
        let loss = tape.sum(prod);
        Ok::<_, NumError>((tape, bound, loss))
    };
    let (mut tape, bound, loss) = run(&store, true).unwrap();
    tape.backward(loss).unwrap();
    let analytic = bound.grads(&tape);
    let numeric = numeric_grads(&store, EPS, |s| {
        let (t, _, l) = run(s, false)?;
        Ok::<_, NumError>(t.value(l).data()[0])
    })
    .unwrap();
    compare(&analytic, &numeric, |n| n.to_string())
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0, f64::max)
}

macro_rules! op_test {
    ($name:ident, $inputs:expr, $f:expr) => {
        #[test]
        fn $name() {
            let err = check($inputs, $f);
            assert!(err <= GRADCHECK_TOL, "max relative error {err:e}");
        }
    };
}

op_test!(add_broadcast, &[("a", &[3, 4]), ("b", &[4])], |t, b| t
    .add(b.var("a"), b.var("b")));
op_test!(sub, &[("a", &[2, 3]), ("b", &[2, 3])], |t, b| t
    .sub(b.var("a"), b.var("b")));
op_test!(mul_same_var, &[("a", &[5])], |t, b| t
    .mul(b.var("a"), b.var("a")));
op_test!(scale, &[("a", &[2, 2])], |t, b| Ok(
    t.scale(b.var("a"), -2.5)
));
op_test!(relu, &[("a", &[3, 3])], |t, b| Ok(t.relu(b.var("a"))));
op_test!(sigmoid, &[("a", &[4])], |t, b| Ok(t.sigmoid(b.var("a"))));
op_test!(dropout_train, &[("a", &[4, 5])], |t, b| t.dropout(
    b.var("a"),
    0.4,
    DropoutKey::new(1, 2, 3),
    true
));
op_test!(layernorm, &[("a", &[3, 6])], |t, b| t
    .layernorm(b.var("a"), 1e-5));
op_test!(softmax_rows, &[("a", &[3, 4])], |t, b| t
    .softmax(b.var("a"), 1));
op_test!(softmax_columns, &[("a", &[3, 4])], |t, b| t
    .softmax(b.var("a"), 0));
op_test!(mean_axis0, &[("a", &[4, 3])], |t, b| t.mean(b.var("a"), 0));
op_test!(mean_pool, &[("a", &[5, 2])], |t, b| t.mean_pool(b.var("a")));
op_test!(matmul, &[("a", &[3, 4]), ("b", &[4, 2])], |t, b| t
    .matmul(b.var("a"), b.var("b")));
op_test!(transpose, &[("a", &[2, 5])], |t, b| t.transpose(b.var("a")));
op_test!(reshape, &[("a", &[2, 6])], |t, b| t
    .reshape(b.var("a"), &[3, 4]));
op_test!(concat_rows, &[("a", &[2, 3]), ("b", &[1, 3])], |t, b| t
    .concat(&[b.var("a"), b.var("b")], 0));
op_test!(concat_columns, &[("a", &[2, 3]), ("b", &[2, 2])], |t, b| t
    .concat(&[b.var("a"), b.var("b")], 1));
op_test!(narrow, &[("a", &[3, 5])], |t, b| t.narrow(
    b.var("a"),
    1,
    1,
    3
));
op_test!(gather_repeated_rows, &[("a", &[4, 3])], |t, b| t
    .gather_rows(b.var("a"), &[2, 0, 2, 3]));
op_test!(bce_fake, &[("a", &[])], |t, b| {
    let p = t.sigmoid(b.var("a"));
    t.bce(p, 1.0)
});
op_test!(bce_real, &[("a", &[])], |t, b| {
    let p = t.sigmoid(b.var("a"));
    t.bce(p, 0.0)
});
op_test!(
    attention_chain,
    &[("q", &[3, 4]), ("k", &[3, 4]), ("v", &[3, 4])],
    |t, b| {
        let kt = t.transpose(b.var("k"))?;
        let s = t.matmul(b.var("q"), kt)?;
        let s = t.scale(s, 0.5);
        let a = t.softmax(s, 1)?;
        t.matmul(a, b.var("v"))
    }
);

#[test]
fn base_model_every_group_within_tolerance() {
    let reports = model_gradcheck(11).unwrap();
    assert!(reports.len() >= 20);
    for r in reports {
        assert!(
            r.max_rel_err <= GRADCHECK_TOL,
            "{}: {:e}",
            r.group,
            r.max_rel_err
        );
    }
}

#[test]
fn cmsg_model_every_group_within_tolerance() {
    let cfg = gradcheck_config();
    let mut ex = gradcheck_instance(&cfg, 5).unwrap();
    // Fused graph: the two chains side by side plus a Type 1 style readout
    // node joined to everything.
    let d = cfg.gsgm.input_dim;
    let mut feats = ex.tsg.features.data().to_vec();
    feats.extend_from_slice(ex.vsg.features.data());
    feats.extend(std::iter::repeat_n(0.0, d));
    let n = 7;
    let mut adj = vec![0.0; n * n];
    let links = [
        (0, 1),
        (1, 2),
        (3, 4),
        (4, 5),
        (0, 6),
        (1, 6),
        (2, 6),
        (3, 6),
        (4, 6),
        (5, 6),
    ];
    let mut deg = [1.0f64; 7];
    for &(a, b) in &links {
        deg[a] += 1.0;
        deg[b] += 1.0;
    }
    for v in 0..n {
        adj[v * n + v] = 1.0 / deg[v];
    }
    for &(a, b) in &links {
        let w = 1.0 / (deg[a] * deg[b]).sqrt();
        adj[a * n + b] = w;
        adj[b * n + a] = w;
    }
    ex.fused = Some(sgfuse_core::model::FusedInput {
        input: sgfuse_core::gsgm::GraphInput {
            adjacency: sgfuse_core::numkit::Tensor::new(vec![n, n], adj).unwrap(),
            features: sgfuse_core::numkit::Tensor::new(vec![n, d], feats).unwrap(),
            readout: Some(6),
        },
        origins: Vec::new(),
        merges: 0,
    });
    let model = Model::new(&cfg, FusionVariant::Cmsg1, 6, d, 5).unwrap();
    let st = Stochastic {
        mode: Mode::Train,
        p: 0.2,
        head: true,
        key: DropoutKey::new(5, 0, 9),
    };
    let loss = |p: &ParamStore, trainable: bool| {
        let m = Model {
            params: p.clone(),
            ..model.clone()
        };
        let mut tape = Tape::new();
        let bound = m.params.bind(&mut tape, trainable);
        let out = m.forward(&mut tape, &bound, &ex, st).unwrap();
        let l = tape.bce(out.prob, 0.0).unwrap();
        (tape, bound, l)
    };
    let (mut tape, bound, l) = loss(&model.params, true);
    tape.backward(l).unwrap();
    let analytic = bound.grads(&tape);
    let numeric = numeric_grads(&model.params, EPS, |p| {
        let (t, _, l) = loss(p, false);
        Ok::<_, ()>(t.value(l).data()[0])
    })
    .unwrap();
    let reports = compare(&analytic, &numeric, |n| n.to_string());
    assert!(reports.iter().any(|r| r.group.starts_with("gsgm.cmsg")));
    for r in reports {
        assert!(
            r.max_rel_err <= GRADCHECK_TOL,
            "{}: {:e}",
            r.group,
            r.max_rel_err
        );
    }
}
