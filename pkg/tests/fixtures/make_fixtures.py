"""Regenerate the committed test fixtures.

Run from the repository root:

    python3 tests/fixtures/make_fixtures.py

The outputs are committed; tests read the committed files and never
invoke this script.  Rerunning it must be a no-op unless the fixture
design itself changes.
"""
from __future__ import annotations

import pathlib

import numpy as np

from relscale.codebook import write_codebook_tsv
from relscale.synthgen import embedding_lines

HERE = pathlib.Path(__file__).resolve().parent

# A small two-system-plus-ATC codebook: the essential-hypertension chain
# used by the walkthrough tests, an acute-MI chain, a chain whose leaf
# description is the uninformative "Others", and the procedure and
# medication chains for Spironolactone-style depth-5 lookups.
CARDIO_ROWS = [
    ("icd9-diagnosis", "390-459", "", "Diseases of the Circulatory System"),
    ("icd9-diagnosis", "401-405", "390-459", "Hypertensive Disease"),
    ("icd9-diagnosis", "401", "401-405", "Essential Hypertension"),
    ("icd9-diagnosis", "410", "390-459", "Acute myocardial infarction"),
    ("icd9-diagnosis", "410.0", "410", "Of anterolateral wall"),
    ("icd9-diagnosis", "410.01", "410.0", "Initial episode of care"),
    ("icd9-diagnosis", "010-018", "", "Tuberculosis"),
    ("icd9-diagnosis", "014", "010-018",
     "Tuberculosis of intestines peritoneum and mesenteric glands"),
    ("icd9-diagnosis", "014.8", "014", "Others"),
    ("icd9-procedure", "35-39", "", "Operations on the cardiovascular system"),
    ("icd9-procedure", "35", "35-39", "Operations on valves and septa of heart"),
    ("icd9-procedure", "35.2", "35", "Replacement of heart valve"),
    ("icd9-procedure", "35.21", "35.2",
     "Replacement of aortic valve with tissue graft"),
    ("atc", "C", "", "Cardiovascular system"),
    ("atc", "C03", "C", "Diuretics"),
    ("atc", "C03D", "C03", "Potassium-sparing agents"),
    ("atc", "C03DA", "C03D", "Aldosterone antagonists"),
    ("atc", "C03DA01", "C03DA", "Spironolactone"),
]

# Word-keyword similarity targets for the calibrated embedding.  The
# four hypertension-chain words are pinned to the values the relevance
# walkthrough expects; everything else just needs to resolve.
PINNED_TARGETS = {
    "circulatory": 0.56,
    "hypertensive": 0.70,
    "essential": 0.54,
    "hypertension": 0.83,
}

DESCRIPTION_WORDS = [
    "tuberculosis", "intestines", "peritoneum", "mesenteric", "glands",
    "others", "acute", "myocardial", "infarction", "anterolateral", "wall",
    "initial", "episode", "care", "operations", "cardiovascular", "valves",
    "septa", "heart", "replacement", "valve", "aortic", "tissue", "graft",
    "diuretics", "potassium", "sparing", "agents", "aldosterone",
    "antagonists", "spironolactone",
]

# Filler vocabulary so the store is a realistic couple hundred tokens.
# Includes stem-collision pairs (run/running, connect/connected/...)
# exercised by the stem-index tests.
FILLER_WORDS = [
    "run", "running", "runner", "connect", "connected", "connection",
    "connecting", "relate", "related", "relating", "relational",
    "generous", "generously", "generate", "generated", "generating",
    "abdominal", "anemia", "angina", "arrhythmia", "arterial", "arteries",
    "artery", "asthma", "atrial", "bacterial", "benign", "bilateral",
    "biopsy", "bladder", "bleeding", "bronchitis", "bypass", "calcium",
    "cancer", "carcinoma", "cardiac", "catheter", "cellulitis", "cerebral",
    "cervical", "cholesterol", "chronic", "cirrhosis", "colitis", "colon",
    "coronary", "cranial", "cyst", "degeneration", "dementia", "dermatitis",
    "diabetic", "dialysis", "diagnosis", "digestive", "dislocation",
    "distal", "duodenal", "dysfunction", "edema", "embolism", "emphysema",
    "endocrine", "endoscopy", "epilepsy", "esophageal", "failure",
    "fatigue", "femoral", "fibrillation", "fibrosis", "fracture",
    "gallbladder", "gastric", "gastritis", "glaucoma", "glucose", "goiter",
    "hemorrhage", "hepatic", "hepatitis", "hernia", "hormone", "immune",
    "infection", "infectious", "inflammation", "inflammatory", "influenza",
    "injury", "insulin", "intestinal", "ischemic", "jaundice", "kidney",
    "laceration", "lesion", "leukemia", "ligament", "liver", "lumbar",
    "lung", "lymphoma", "malignant", "melanoma", "meningitis", "metabolic",
    "migraine", "mitral", "muscle", "mutation", "nasal", "nephritis",
    "nerve", "neurological", "neuropathy", "nutritional", "obesity",
    "obstruction", "occlusion", "ocular", "oral", "osteoporosis",
    "ovarian", "pancreas", "pancreatitis", "paralysis", "pelvic",
    "peptic", "pericardial", "peripheral", "pneumonia", "pregnancy",
    "prostate", "psoriasis", "pulmonary", "pulse", "rectal", "renal",
    "respiratory", "retinal", "rheumatic", "rupture", "sciatic",
    "sclerosis", "screening", "seizure", "sepsis", "sinus", "skeletal",
    "spinal", "spleen", "stenosis", "sternum", "stroke", "surgical",
    "tachycardia", "tendon", "thoracic", "thrombosis", "thyroid",
    "trauma", "tremor", "tumor", "ulcer", "ulcerative", "urinary",
    "uterine", "vascular", "vein", "venous", "ventricular", "vertebral",
    "viral", "vitamin",
]


def build_embedding_lines() -> list[str]:
    rng = np.random.default_rng(20260815)
    targets = dict(PINNED_TARGETS)
    for word in DESCRIPTION_WORDS + FILLER_WORDS:
        if word not in targets:
            targets[word] = round(float(rng.uniform(0.30, 0.75)), 4)
    return embedding_lines("diabetes", targets, dim=8,
                           rng=np.random.default_rng(20260816))


def main() -> None:
    write_codebook_tsv(CARDIO_ROWS, HERE / "codebook_cardio.tsv")
    lines = build_embedding_lines()
    (HERE / "embedding_cardio.txt").write_text("\n".join(lines) + "\n",
                                               encoding="utf-8")
    print(f"wrote {HERE / 'codebook_cardio.tsv'} ({len(CARDIO_ROWS)} rows)")
    print(f"wrote {HERE / 'embedding_cardio.txt'} ({lines[0]} header)")


if __name__ == "__main__":
    main()
