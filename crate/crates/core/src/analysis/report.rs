use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{check_dynamic_modularity, AlgorithmClass, TraceSkeleton};

/// Plain-text statement of whether the joint gradient description of this
/// trace factorizes into independent per-step descriptions (it does iff
/// the criterion holds). Nothing is measured; the statement follows from
/// the graph verdict.
pub fn factorization_report(algo: &AlgorithmClass, skeleton: &TraceSkeleton) -> String {
    let steps = skeleton.steps();
    let header = format!(
        "algorithm: {algo}\nsteps: {steps}\ndecisions: {}\n",
        skeleton.decisions()
    );
    if steps == 0 {
        return format!("{header}no gradients; vacuously modular\n");
    }
    let verdict = check_dynamic_modularity(algo, skeleton);
    let mut out = header;
    if verdict.criterion_satisfied {
        out.push_str(&format!(
            "every pair of the {steps} per-step gradients is d-separated by the trace and the mechanisms;\n\
             the joint gradient description factorizes into per-step descriptions\n"
        ));
    } else {
        let path: Vec<String> = verdict.witness.clone().unwrap_or_default();
        let shared: Vec<&String> = path.iter().skip(1).take(path.len().saturating_sub(2)).collect();
        out.push_str("the per-step gradients are not d-separated by the trace and the mechanisms;\n");
        out.push_str("the joint gradient description does not factorize into per-step descriptions\n");
        out.push_str(&format!("unblocked path: {}\n", path.join(" - ")));
        let names: Vec<&str> = shared.iter().map(|s| s.as_str()).collect();
        out.push_str(&format!("shared hidden variable: {}\n", names.join(", ")));
    }
    out.push_str(&format!(
        "static modularity: {}\ndynamic modularity: {}\ncyclic trace: {}\n",
        verdict.static_modularity, verdict.dynamic_modularity, verdict.cyclic_trace
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_case() {
        let skel = TraceSkeleton::acyclic(3, 4).unwrap();
        let r = factorization_report(&AlgorithmClass::cvs(), &skel);
        assert!(r.contains("factorizes into per-step descriptions"));
        assert!(r.contains("dynamic modularity: true"));
    }

    #[test]
    fn non_modular_case_names_the_shared_variable() {
        let skel = TraceSkeleton::acyclic(3, 4).unwrap();
        let r = factorization_report(&AlgorithmClass::ppo(), &skel);
        assert!(r.contains("does not factorize"));
        assert!(r.contains("shared hidden variable: sum_k b^k"));
    }

    #[test]
    fn empty_trace() {
        let skel = TraceSkeleton::acyclic(0, 4).unwrap();
        let r = factorization_report(&AlgorithmClass::ppo(), &skel);
        assert!(r.contains("no gradients; vacuously modular"));
    }
}
