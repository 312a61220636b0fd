use mdpcat_dsl::gen::random_workspace;
use mdpcat_dsl::{parse_workspace, serialize_workspace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_inverts_serialize(seed in any::<u64>()) {
        let w = random_workspace(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = serialize_workspace(&w);
        prop_assert_eq!(&text, &serialize_workspace(&w));
        let back = parse_workspace("gen", &text);
        prop_assert!(back.is_ok(), "{:?}\n{}", back.err(), text);
        prop_assert_eq!(back.unwrap(), w);
    }
}
