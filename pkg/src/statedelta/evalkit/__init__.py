from statedelta.evalkit.answers import FORMATS, ExtractedAnswer, extract_answer, normalize
from statedelta.evalkit.metrics import accuracy, exact_match, fever_label, metric_names, score_answer, token_f1, yes_no
from statedelta.evalkit.scoring import AggregationError, QuestionScore, aggregate, answer_format, score_question

__all__ = [
    "FORMATS",
    "AggregationError",
    "ExtractedAnswer",
    "QuestionScore",
    "accuracy",
    "aggregate",
    "answer_format",
    "exact_match",
    "extract_answer",
    "fever_label",
    "metric_names",
    "normalize",
    "score_answer",
    "score_question",
    "token_f1",
    "yes_no",
]
