mod common;

#[test]
fn agent_modules_never_name_hidden_tests() {
    let found = common::audit::violations();
    assert!(found.is_empty(), "hidden-test access in agent code: {found:?}");
}

#[test]
fn agents_receive_problems_without_hidden_tests() {
    assert!(common::audit::public_view_has_no_hidden_field());
}
