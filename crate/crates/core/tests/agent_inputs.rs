mod common;

use semnav::agent::{AgentParams, Variant};
use semnav::env;
use semnav::nn::Adam;
use semnav::pipeline;
use semnav::train::{self, EnvWorker};
use semnav::world::SceneAssets;

use common::{small_config, suite};

#[test]
fn layout_only_inputs_ignore_object_attributes() {
    let cfg = small_config();
    let s = suite(&cfg);
    let nav = s.nav(&cfg);
    let ep = &s.train[0];
    let assets = nav.scene_of(ep).unwrap();
    let pose = ep.all_candidates[ep.goal_views[0]].pose;

    let mut scene = assets.scene.clone();
    for obj in &mut scene.objects {
        for (name, value) in obj.descriptor.attributes.iter_mut() {
            let vocab = &cfg.semspace.attribute_vocab[name];
            let i = vocab.iter().position(|v| v == value).unwrap();
            *value = vocab[(i + 1) % vocab.len()].clone();
        }
    }
    let recolored = SceneAssets::new(scene, &s.codebook).unwrap();

    let a = nav.render(assets, &pose);
    let b = nav.render(&recolored, &pose);
    assert_eq!(a.layout, b.layout);
    assert_ne!(a.semantic, b.semantic);

    let encode = |variant: Variant| {
        let c = pipeline::seeded(&cfg, variant, 1);
        let params = AgentParams::new(&c.agent).unwrap();
        let goal = env::view_goal(ep, ep.goal_views[0], variant);
        let za = params.encode_inputs(&env::agent_input(&a, &goal, None)).unwrap().0;
        let zb = params.encode_inputs(&env::agent_input(&b, &goal, None)).unwrap().0;
        (za, zb)
    };
    let (lo_a, lo_b) = encode(Variant::Lo);
    assert_eq!(lo_a, lo_b);
    let (psl_a, psl_b) = encode(Variant::Psl);
    assert_ne!(psl_a, psl_b);
}

#[test]
fn semantic_only_observation_path_has_no_trainable_state() {
    let cfg = small_config();
    let s = suite(&cfg);
    let nav = s.nav(&cfg);
    let c = pipeline::seeded(&cfg, Variant::So, 2);
    let mut params = AgentParams::new(&c.agent).unwrap();
    let ep = &s.train[0];
    let obs = nav.render(nav.scene_of(ep).unwrap(), &ep.start);
    let input = env::agent_input(&obs, &env::view_goal(ep, ep.goal_views[0], Variant::So), None);
    let before = params.encode_inputs(&input).unwrap();

    let mut ws: Vec<EnvWorker> = (0..c.ppo.n_envs)
        .map(|i| EnvWorker::new(i, c.ppo.seed, c.agent.hidden_dim))
        .collect();
    let buf = train::collect_rollouts(&mut ws, &nav, &s.train, &params, &c.ppo, 0, false).unwrap();
    let snapshot = params.data.clone();
    let mut adam = Adam::new(params.len(), c.ppo.adam);
    train::ppo_update(&mut params, &mut adam, &buf, &c.ppo, 0).unwrap();
    assert_ne!(snapshot, params.data);

    assert_eq!(params.encode_inputs(&input).unwrap(), before);
    assert!(params.segments().iter().all(|seg| !seg.name.starts_with("encoder")));
}
