// Generated by `cargo run --release -p gexpect-core --example oracle_margins`.
// Do not edit by hand; rerun the oracle instead.

use super::FrozenMargin;

pub const FROZEN_MARGINS: &[FrozenMargin] = &[
    FrozenMargin {
        generator: "smooth_nonhom(1)",
        claim: "identity_clipped(6)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: Some(1.6598552812238807e-1),
        oracle_e: 4.1421356237316626e-1,
        oracle_c: 2.2822670919808247e-1,
        oracle_combined_err: 2.0001325052695727e-2,
        oracle: "pde nx=1201 eps=2.000e-2 uniform K=2001",
    },
    FrozenMargin {
        generator: "abs(0.5)",
        claim: "abs_clipped(6)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: None,
        oracle_e: 1.0807032505920935e0,
        oracle_c: 1.0808968541364274e0,
        oracle_combined_err: 2.0117262725506967e-2,
        oracle: "pde nx=1201 eps=2.000e-2 uniform K=2001",
    },
    FrozenMargin {
        generator: "abs(0.5)",
        claim: "two_bump(0,0.5,1.5;1,0.5)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: Some(1.2481341632824931e-2),
        oracle_e: 3.337212455391745e-1,
        oracle_c: 3.5018892844073507e-1,
        oracle_combined_err: 3.986341268735656e-3,
        oracle: "pde nx=6401 eps=1.875e-3 uniform K=2001",
    },
    FrozenMargin {
        generator: "pos_part(0.5)",
        claim: "two_bump(0,0.5,1.5;1,0.5)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: Some(7.104286228731551e-3),
        oracle_e: 3.014238397112473e-1,
        oracle_c: 3.1218213420306246e-1,
        oracle_combined_err: 3.6540082630835955e-3,
        oracle: "pde nx=6401 eps=1.875e-3 uniform K=2001",
    },
    FrozenMargin {
        generator: "smooth_nonhom(1)",
        claim: "two_bump(0,0.5,1.5;1,0.5)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: None,
        oracle_e: 2.806762624790715e-1,
        oracle_c: 2.875463933498712e-1,
        oracle_combined_err: 3.726173075179819e-3,
        oracle: "pde nx=6401 eps=1.875e-3 uniform K=2001",
    },
    FrozenMargin {
        generator: "abs(0.5)",
        claim: "sum(0.5*ind(x>=0)+0,0.5*level_set(1 intervals)+0)",
        model: "n=1;d=1;b=Zero;sigma=Constant { matrix: [1.0] };x0=[0];T=1;steps=100",
        margin: Some(2.0930734381910565e-2),
        oracle_e: 4.7326417864867265e-1,
        oracle_c: 4.968706723996033e-1,
        oracle_combined_err: 2.675759369020093e-3,
        oracle: "pde nx=6401 eps=1.875e-3 uniform K=2001",
    },
];
