use winoprobe::adapter::{open_adapter, ProcessModel};
use winoprobe::fixture;
use winoprobe_core::attention::{attention_diff_map, head_importance, CriticalTarget};
use winoprobe_core::bridge::toy::{ToyConfig, ToyModel};
use winoprobe_core::bridge::{BridgeError, HeadId, LanguageModel, MaskQuery};
use winoprobe_core::lexicon::LexiconBundle;
use winoprobe_core::perturb::perturb_dataset;
use winoprobe_core::schema::PerturbationKind;
use winoprobe_core::scoring::{batch_score, perturbed_scorables, scorables, Backend, ScoreOptions, Strategy};

fn served(query: &str) -> ProcessModel {
    ProcessModel::spawn(&format!("{} serve-toy --locator builtin:toy{query}", env!("CARGO_BIN_EXE_winoprobe"))).expect("child adapter starts")
}

#[test]
fn subprocess_toy_scores_like_the_in_process_toy() {
    let d = fixture::dataset();
    let mut local = ToyModel::builtin(ToyConfig::default());
    let mut remote = served("");
    assert_eq!(remote.info().vocab_size, local.info().vocab_size);
    assert_eq!(remote.info().id, local.info().id);
    let lex = LexiconBundle::builtin();
    let pert = perturb_dataset(&d, PerturbationKind::Number, &lex, 1);
    for strategy in [Strategy::MaskSubstitution, Strategy::ContextOption] {
        for opts in [ScoreOptions::default(), ScoreOptions { head_mask: vec![HeadId::new(0, 1)], ..ScoreOptions::default() }] {
            let items = scorables(&d);
            let a = batch_score("original", &items, &mut Backend::Model(&mut local), strategy, &opts, 3).unwrap();
            let b = batch_score("original", &items, &mut Backend::Model(&mut remote), strategy, &opts, 3).unwrap();
            assert_eq!(a, b);
            let items = perturbed_scorables(&pert);
            let a = batch_score("NUM", &items, &mut Backend::Model(&mut local), strategy, &opts, 3).unwrap();
            let b = batch_score("NUM", &items, &mut Backend::Model(&mut remote), strategy, &opts, 3).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn subprocess_attention_and_hidden_states_match() {
    let d = fixture::dataset();
    let mut local = ToyModel::builtin(ToyConfig { layers: 3, heads: 2, ..ToyConfig::default() });
    let mut remote = served("?layers=3&heads=2");
    for inst in d.instances() {
        assert_eq!(attention_diff_map(inst, &mut local).unwrap(), attention_diff_map(inst, &mut remote).unwrap());
        let ctx = local.tokenize(&inst.tokens).unwrap();
        assert_eq!(ctx, remote.tokenize(&inst.tokens).unwrap());
        assert_eq!(local.hidden_state(&ctx.tokens).unwrap(), remote.hidden_state(&ctx.tokens).unwrap());
        let q = MaskQuery { tokens: ctx.tokens.clone(), mask_positions: vec![inst.pronoun_span.start], head_mask: vec![], nucleus_p: Some(0.9) };
        assert_eq!(local.mask_distributions(&q).unwrap(), remote.mask_distributions(&q).unwrap());
    }
    let insts: Vec<_> = d.instances().iter().collect();
    assert_eq!(
        head_importance(&insts, &mut local, CriticalTarget::CorrectReferent).unwrap(),
        head_importance(&insts, &mut remote, CriticalTarget::CorrectReferent).unwrap()
    );
}

#[test]
fn adapter_errors_cross_the_wire() {
    let mut remote = served("");
    let q = MaskQuery { tokens: vec![2, 5, 3], mask_positions: vec![9], head_mask: vec![], nucleus_p: None };
    assert!(matches!(remote.mask_distributions(&q), Err(BridgeError::BadRequest(_))));
    let q = MaskQuery { tokens: vec![2, 5, 3], mask_positions: vec![1], head_mask: vec![HeadId::new(7, 0)], nucleus_p: None };
    assert!(remote.mask_distributions(&q).is_err());
    assert!(remote.sequence_logprob(&[2, 5, 3]).is_ok());
    assert!(matches!(open_adapter("cmd:"), Err(BridgeError::Locator(_))));
    assert!(open_adapter("cmd:/no/such/adapter").is_err());
    assert!(matches!(open_adapter("builtin:gpt"), Err(BridgeError::Locator(_))));
}
