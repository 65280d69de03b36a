use super::{
    classification_report, cvs_metrics, detection_map, triplet_metrics, DetectionSet, ImageDetections, MetricReport,
    ScoredBox,
};
use crate::datamodel::{GridCell, Label, LabelShape, TaskKind, TaskVocabularies};
use crate::error::{Error, Result};

fn shape_error(task: TaskKind, label: &Label) -> Error {
    Error::Config(format!("{task} expects {:?} labels, got {:?}", task.label_shape(), label.shape()))
}

/// Metrics for one task from aligned ground truth and predictions. A `None`
/// prediction, or one of the wrong shape, is a parse failure. Predicted boxes
/// get confidence 1; box labels act as classes.
pub fn task_report(
    task: TaskKind,
    gt: &[Label],
    pred: &[Option<Label>],
    vocab: &TaskVocabularies,
) -> Result<MetricReport> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch { left: gt.len(), right: pred.len() });
    }
    if let Some(bad) = gt.iter().find(|g| g.shape() != task.label_shape()) {
        return Err(shape_error(task, bad));
    }
    let pred: Vec<Option<&Label>> = pred
        .iter()
        .map(|p| p.as_ref().filter(|l| l.shape() == task.label_shape()))
        .collect();
    match task.label_shape() {
        LabelShape::Class | LabelShape::Grid => {
            let gt: Vec<String> = gt.iter().map(Label::render).collect();
            let pred: Vec<Option<String>> = pred.iter().map(|p| p.map(Label::render)).collect();
            let classes: Vec<String> = if task.label_shape() == LabelShape::Grid {
                GridCell::ALL.iter().map(|g| g.as_str().to_string()).collect()
            } else {
                vocab.for_task(task).to_vec()
            };
            classification_report(&gt, &pred, &classes)
        }
        LabelShape::Triplet => {
            let gt: Vec<_> = gt
                .iter()
                .filter_map(|g| match g {
                    Label::Triplet(t) => Some(t.clone()),
                    _ => None,
                })
                .collect();
            let pred: Vec<_> = pred
                .iter()
                .map(|p| match p {
                    Some(Label::Triplet(t)) => Some(t.clone()),
                    _ => None,
                })
                .collect();
            triplet_metrics(&gt, &pred)
        }
        LabelShape::Cvs => {
            let gt: Vec<_> = gt
                .iter()
                .filter_map(|g| match g {
                    Label::Cvs(c) => Some(*c),
                    _ => None,
                })
                .collect();
            let pred: Vec<_> = pred
                .iter()
                .map(|p| match p {
                    Some(Label::Cvs(c)) => Some(*c),
                    _ => None,
                })
                .collect();
            cvs_metrics(&gt, &pred)
        }
        LabelShape::Boxes => {
            let images = gt
                .iter()
                .zip(&pred)
                .map(|(g, p)| {
                    let gt = match g {
                        Label::Boxes(b) => b.clone(),
                        _ => Vec::new(),
                    };
                    match p {
                        Some(Label::Boxes(b)) => ImageDetections {
                            gt,
                            pred: b.iter().map(|bbox| ScoredBox { bbox: bbox.clone(), confidence: 1.0 }).collect(),
                            failed: false,
                        },
                        _ => ImageDetections { gt, pred: Vec::new(), failed: true },
                    }
                })
                .collect();
            detection_map(&DetectionSet { images })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{BoundingBox, CvsVector};

    #[test]
    fn class_task() {
        let vocab = TaskVocabularies::builtin();
        let gt = vec![Label::Class("Preparation".into()), Label::Class("Clipping and cutting".into())];
        let pred = vec![Some(Label::Class("preparation".into())), None];
        let r = task_report(TaskKind::PhaseRecognition, &gt, &pred, &vocab).unwrap();
        assert_eq!(r.get("accuracy"), Some(50.0));
        assert_eq!(r.parse_failures, 1);
    }

    #[test]
    fn wrong_shape_prediction_is_a_failure() {
        let vocab = TaskVocabularies::builtin();
        let gt = vec![Label::Cvs(CvsVector::new(true, true, true))];
        let pred = vec![Some(Label::Class("yes".into()))];
        let r = task_report(TaskKind::CvsAssessment, &gt, &pred, &vocab).unwrap();
        assert_eq!(r.get("average_accuracy"), Some(0.0));
        assert!(task_report(TaskKind::PhaseRecognition, &gt, &[None], &vocab).is_err());
    }

    #[test]
    fn exact_boxes_score_full_miou() {
        let vocab = TaskVocabularies::builtin();
        let b = vec![BoundingBox::new(0.0, 0.0, 10.0, 10.0)];
        let r = task_report(
            TaskKind::InstrumentLocalizationBox,
            &[Label::Boxes(b.clone())],
            &[Some(Label::Boxes(b))],
            &vocab,
        )
        .unwrap();
        assert_eq!(r.get("miou"), Some(100.0));
    }
}
