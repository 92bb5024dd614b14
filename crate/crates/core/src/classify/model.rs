use std::path::Path;

use super::{ClassifyError, Result, SoftmaxClassifier};

pub fn save_model(model: &SoftmaxClassifier, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(model).map_err(|e| ClassifyError::Model(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| ClassifyError::Model(format!("{}: {e}", path.display())))
}

/// Loads a model and checks that its shapes agree.
pub fn load_model(path: &Path) -> Result<SoftmaxClassifier> {
    let text = std::fs::read_to_string(path).map_err(|e| ClassifyError::Model(format!("{}: {e}", path.display())))?;
    let model: SoftmaxClassifier = serde_json::from_str(&text).map_err(|e| ClassifyError::Model(e.to_string()))?;
    let expected = model.classes.len() * (model.dimension + 1);
    if model.classes.len() < 2 {
        return Err(ClassifyError::Model("fewer than two classes".into()));
    }
    if model.weights.len() != expected {
        return Err(ClassifyError::Model(format!(
            "weights hold {} values, expected {} classes x {} = {expected}",
            model.weights.len(),
            model.classes.len(),
            model.dimension + 1
        )));
    }
    if model.standardizer.means.len() != model.dimension || model.standardizer.stds.len() != model.dimension {
        return Err(ClassifyError::Model("standardizer dimension mismatch".into()));
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(ClassifyError::Model("non-finite weight".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{fit, FitOptions};

    #[test]
    fn round_trip_and_shape_check() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.1, 0.9], vec![0.9, 0.2]];
        let y: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let mut m = fit(&x, &y, &FitOptions::default()).unwrap();
        m.fit.objective_trace.clear();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);

        let mut bad: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        bad["weights"].as_array_mut().unwrap().pop();
        std::fs::write(&path, bad.to_string()).unwrap();
        assert!(load_model(&path).is_err());
    }
}
