use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lch_core::client::{fingerprint, ChatMessage, GenParams};

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.random_range(1..=max);
    (0..len).map(|_| rng.random_range(' '..='~')).collect()
}

fn random_messages(rng: &mut ChaCha8Rng) -> Vec<ChatMessage> {
    let mut m = Vec::new();
    if rng.random_bool(0.5) {
        m.push(ChatMessage::system(random_text(rng, 40)));
    }
    m.push(ChatMessage::user(random_text(rng, 400)));
    m
}

#[test]
fn equal_inputs_hash_equally() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let messages = random_messages(&mut rng);
        let params = GenParams {
            max_tokens: rng.random_range(1..4096),
            temperature: 0.0,
        };
        let copy = messages.clone();
        assert_eq!(fingerprint(&messages, params), fingerprint(&copy, params));
    }
}

#[test]
fn perturbations_never_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = vec![
        ChatMessage::system("You are a careful assistant."),
        ChatMessage::user(random_text(&mut rng, 2000)),
    ];
    let params = GenParams::SHORT_ANSWER;
    let mut seen = HashSet::from([fingerprint(&base, params)]);
    let mut distinct_inputs = HashSet::from([(base.clone(), params.max_tokens, params.temperature.to_bits())]);
    for _ in 0..100_000 {
        let mut m = base.clone();
        let mut p = params;
        match rng.random_range(0..4) {
            0 => {
                let content = &mut m[1].content;
                let at = rng.random_range(0..content.len());
                content.replace_range(at..at + 1, &rng.random_range('!'..='~').to_string());
            }
            1 => {
                let at = rng.random_range(0..=m[1].content.len());
                m[1].content.insert(at, rng.random_range(' '..='~'));
            }
            2 => p.max_tokens = rng.random_range(1..100_000),
            _ => p.temperature = rng.random_range(0.0..2.0),
        }
        let fresh = distinct_inputs.insert((m.clone(), p.max_tokens, p.temperature.to_bits()));
        let new_hash = seen.insert(fingerprint(&m, p));
        assert_eq!(fresh, new_hash, "fingerprint collision or instability");
    }
    assert!(seen.len() > 90_000);
}
