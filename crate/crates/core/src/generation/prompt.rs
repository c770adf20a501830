use crate::policy_lang::{signature, PolicyProgram};
use crate::spec_input::TaskSpec;

pub const DEFAULT_DESCRIPTION: &str = "Finds a policy for the control task.";
pub const IMPROVE_INSTRUCTION: &str =
    "On every iteration, improve policy_v1 over the policy_vX methods from previous iterations.";
/// Versions shown to the generator; the prompt asks for `policy_v{VERSIONS}`.
pub const VERSIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    /// Iterations of `(low, high)`; `None` marks the starter.
    pub lineage: (Option<u64>, Option<u64>),
    pub version_count: usize,
    /// The trailing `def policy_v2(...):` line and its docstring.
    pub target_header: String,
}

pub fn target_name() -> String {
    format!("policy_v{VERSIONS}")
}

/// Two parents, worse first, followed by the header of the version to write.
pub fn build_prompt(
    low: &PolicyProgram,
    high: &PolicyProgram,
    spec: &TaskSpec,
    lineage: (Option<u64>, Option<u64>),
) -> Prompt {
    let description = spec.task_description.trim();
    let description = if description.is_empty() {
        DEFAULT_DESCRIPTION
    } else {
        description
    };
    let mut text = String::new();
    text.push_str("\"\"\"");
    text.push_str(description);
    text.push('\n');
    text.push_str(IMPROVE_INSTRUCTION);
    text.push_str("\n\"\"\"\nimport numpy as np\n\n");
    text.push_str(&low.pretty_named("policy_v0"));
    text.push('\n');
    text.push_str(&high.pretty_named("policy_v1"));
    text.push('\n');
    let target_header = format!(
        "{}\n    \"\"\"Improved version of 'policy_v1'.\"\"\"\n",
        signature(&high.ast, &target_name())
    );
    text.push_str(&target_header);
    Prompt {
        text,
        lineage,
        version_count: VERSIONS,
        target_header,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::EnvId;

    fn prog(src: &str) -> PolicyProgram {
        PolicyProgram::parse(src, 3, 1).unwrap()
    }

    #[test]
    fn cold_start_duplicates_starter() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 1000);
        let s = spec.starter().unwrap();
        let p = build_prompt(&s, &s, &spec, (None, None));
        let v0 = s.pretty_named("policy_v0");
        let v1 = s.pretty_named("policy_v1");
        assert!(p.text.contains(&v0));
        assert!(p.text.contains(&v1));
        assert_eq!(v0.lines().skip(1).collect::<Vec<_>>(), v1.lines().skip(1).collect::<Vec<_>>());
        assert!(p.text.ends_with(
            "def policy_v2(obs: np.ndarray) -> float:\n    \"\"\"Improved version of 'policy_v1'.\"\"\"\n"
        ));
        assert!(p.text.starts_with("\"\"\"Finds a policy for the control task.\nOn every iteration"));
        assert_eq!(p.version_count, 2);
    }

    #[test]
    fn worse_parent_first() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 1000);
        let low = prog("def policy(obs):\n    return 0.1\n");
        let high = prog("def policy(obs):\n    return sign(obs[2])\n");
        let p = build_prompt(&low, &high, &spec, (Some(3), Some(8)));
        let i0 = p.text.find("def policy_v0(obs):\n    return 0.1").unwrap();
        let i1 = p.text.find("def policy_v1(obs):\n    return sign(obs[2])").unwrap();
        assert!(i0 < i1);
        assert_eq!(p.lineage, (Some(3), Some(8)));
    }

    #[test]
    fn rename_leaves_body_alone() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 1000);
        let p = prog("def policy(obs):\n    x = obs[0]\n    return x\n");
        let text = build_prompt(&p, &p, &spec, (None, None)).text;
        assert!(text.contains("def policy_v0(obs):\n    x = obs[0]\n    return x\n"));
        assert!(!text.contains("def policy(obs)"));
    }
}
