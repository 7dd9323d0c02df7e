use std::fmt::Write;

use super::{ParameterDecl, ProtocolSpec};

/// Canonical source text: `roles`, `parameters`, `->`, and `key` markers only
/// in the protocol declaration.
pub fn format_protocol(spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {{", spec.name);
    let _ = writeln!(out, "  roles {}", spec.roles.join(", "));
    let params: Vec<String> = spec.parameters.iter().map(|p| decl(p, true)).collect();
    let _ = writeln!(out, "  parameters {}", params.join(", "));
    out.push('\n');
    for m in &spec.messages {
        let params: Vec<String> = m.parameters.iter().map(|p| decl(p, false)).collect();
        let _ = writeln!(
            out,
            "  {} -> {}: {}[{}]",
            m.sender,
            m.receiver,
            m.name,
            params.join(", ")
        );
    }
    out.push_str("}\n");
    out
}

fn decl(p: &ParameterDecl, with_key: bool) -> String {
    if with_key && p.is_key {
        format!("{} {} key", p.adornment, p.name)
    } else {
        format!("{} {}", p.adornment, p.name)
    }
}
