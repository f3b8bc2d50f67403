"""Regenerate the bundled rubric catalogs (src/clinbench/data/catalog.json and toy_catalog.json).

Each dimension is declared as (name, behaviour); the behaviour is a verb
phrase used for the description and the four behavioural anchors.

    python scripts/build_catalog.py
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from clinbench.rubric import CATEGORIES, META_CATEGORIES, parse_catalog

OUT = Path(__file__).resolve().parents[1] / "src" / "clinbench" / "data"

DX = {"objectives": ["diagnosis"]}
TX = {"objectives": ["treatment_advice", "medication_advice"]}
MED = {"objectives": ["medication_advice"]}
MED_TX = {"objectives": ["medication_advice", "treatment_advice"]}
NONPHARM = {"objectives": ["treatment_advice", "lifestyle_advice"]}
LIFE = {"objectives": ["lifestyle_advice"]}
SCREEN = {"objectives": ["medical_screening"]}
TESTS = {"objectives": ["medical_screening", "diagnosis"]}
PREVENTIVE = {"reasons": ["wellness_checkup", "pregnancy"]}
PREGNANCY_MEDS = {"reasons": ["pregnancy"], "objectives": ["lifestyle_advice", "medical_screening"]}

# category -> (description, default applicability or None for global, [(name, behaviour[, applicability])])
SPEC: dict[str, tuple[str, dict | None, list[tuple]]] = {
    "medical knowledge": (
        "Accuracy and currency of the medical facts the doctor relies on.",
        None,
        [
            ("factual accuracy", "state medical facts that are correct"),
            ("guideline concordance", "align statements with current clinical guidelines"),
            ("pharmacological knowledge", "describe drug actions, doses and effects correctly"),
            ("knowledge boundaries", "recognise where current evidence is uncertain or incomplete"),
        ],
    ),
    "clinical reasoning": (
        "How the doctor integrates findings into sound clinical judgements.",
        None,
        [
            ("data integration", "combine history, symptoms and context into a coherent picture"),
            ("logical coherence", "draw conclusions that follow from the information gathered"),
            ("uncertainty handling", "acknowledge and manage diagnostic and therapeutic uncertainty"),
            ("red flag recognition", "notice and act on warning signs that need urgent attention"),
        ],
    ),
    "review of symptoms": (
        "Systematic elicitation of the patient's symptoms.",
        None,
        [
            ("onset and timeline", "establish when symptoms started and how they evolved"),
            ("symptom characterisation", "explore severity, frequency, triggers and relieving factors"),
            ("associated symptoms", "ask about related symptoms that change the assessment"),
            ("systems coverage", "cover the organ systems relevant to the complaint"),
        ],
    ),
    "symptom interpretation": (
        "Making sense of the symptoms the patient reports.",
        None,
        [
            ("severity assessment", "judge how serious the reported symptoms are"),
            ("pattern recognition", "link symptom clusters to plausible clinical patterns"),
            ("significance explanation", "explain to the patient what the symptoms may mean"),
        ],
    ),
    "differential diagnosis": (
        "Breadth and ordering of the candidate diagnoses considered.",
        DX,
        [
            ("completeness", "consider the full range of plausible diagnoses"),
            ("prioritization", "rank candidate diagnoses by likelihood and urgency"),
            ("rare disease inclusion", "keep serious or rare conditions in view when the picture warrants it"),
            ("bias awareness", "avoid anchoring and premature closure on a single diagnosis"),
            ("differential justification", "explain why each candidate diagnosis is kept or excluded"),
        ],
    ),
    "final diagnosis": (
        "The working diagnosis the doctor arrives at and how it is conveyed.",
        DX,
        [
            ("diagnostic accuracy", "reach a working diagnosis consistent with the patient's record"),
            ("confidence calibration", "express a level of confidence that matches the evidence"),
            ("diagnosis communication", "explain the working diagnosis and next steps in plain terms"),
        ],
    ),
    "first-line treatment recommendation": (
        "The initial treatment the doctor recommends.",
        TX,
        [
            ("first-line appropriateness", "recommend a guideline-concordant first-line treatment"),
            ("individualisation", "adapt the recommendation to the patient's history and preferences"),
            ("treatment rationale", "explain why the recommended treatment fits this patient"),
            ("expected course", "describe expected benefits, timelines and what to watch for"),
        ],
    ),
    "alternative treatment options": (
        "Whether reasonable alternatives are presented and compared.",
        TX,
        [
            ("alternatives offered", "mention reasonable alternative treatments"),
            ("trade-off comparison", "compare benefits, risks and burdens of the options"),
            ("shared decision-making", "involve the patient in choosing between options"),
        ],
    ),
    "treatment contraindications": (
        "Identification of reasons a treatment may be unsafe for this patient.",
        TX,
        [
            ("detection", "identify contraindications from the patient's conditions, medications and allergies"),
            ("contraindication communication", "explain identified contraindications to the patient"),
            ("risk mitigation", "adjust the plan when a contraindication is found"),
        ],
    ),
    "non-pharmacologic advice": (
        "Advice that does not rely on medication.",
        NONPHARM,
        [
            ("non-drug options", "offer relevant non-pharmacologic measures"),
            ("evidence basis", "prefer non-drug measures with supporting evidence"),
            ("practicality", "make non-drug advice concrete and feasible for this patient"),
        ],
    ),
    "medication selection": (
        "Choice and specification of medications.",
        MED,
        [
            ("drug choice", "select a medication appropriate to the condition and patient"),
            ("dosing guidance", "give correct dose, frequency and duration"),
            ("formulation and route", "choose a sensible formulation and route of administration"),
            ("cost and access", "take cost, coverage and availability into account"),
        ],
    ),
    "medication management": (
        "Ongoing handling of the patient's medications.",
        MED_TX,
        [
            ("medication reconciliation", "establish the full list of current medications"),
            ("medication adherence exploration", "explore whether and how the patient takes medications"),
            ("monitoring plan", "set out what needs monitoring and when"),
            ("titration and follow-up", "plan dose adjustments and medication reviews"),
        ],
    ),
    "lifestyle recommendation": (
        "Specific lifestyle changes the doctor recommends.",
        LIFE,
        [
            ("diet", "give appropriate dietary advice"),
            ("physical activity", "give appropriate exercise and activity advice"),
            ("sleep and stress", "address sleep and stress management"),
            ("goal setting", "agree realistic, specific lifestyle goals with the patient"),
        ],
    ),
    "lifestyle influences": (
        "Exploration of lifestyle and environmental factors affecting health.",
        None,
        [
            ("substance use", "ask about tobacco, alcohol and other substance use"),
            ("occupational and environmental factors", "explore work and environmental exposures"),
            ("social determinants", "explore living situation, support and financial constraints"),
        ],
    ),
    "lifestyle tracking": (
        "How the patient can monitor lifestyle change over time.",
        LIFE,
        [
            ("self-monitoring guidance", "suggest practical ways to track relevant behaviours"),
            ("progress metrics", "define measurable markers of progress"),
            ("lifestyle follow-up", "plan when and how progress will be reviewed"),
        ],
    ),
    "screening eligibility": (
        "Whether the patient is offered the screening they qualify for.",
        SCREEN,
        [
            ("risk-based eligibility", "determine screening eligibility from the patient's risk factors"),
            ("age and sex appropriateness", "recommend screening suited to the patient's age and sex"),
            ("screening quality", "propose screening at the right interval with a validated method"),
            ("preventive screening recommendations", "recommend preventive screening due for this patient", PREVENTIVE),
        ],
    ),
    "test selection": (
        "Choice of investigations.",
        TESTS,
        [
            ("appropriate test ordering", "propose tests that answer the clinical question"),
            ("low-value test avoidance", "avoid unnecessary or low-value testing"),
            ("test purpose explanation", "explain why each test is proposed"),
            ("test timing", "sequence and time tests sensibly"),
        ],
    ),
    "test interpretation": (
        "Reading and conveying test results.",
        TESTS,
        [
            ("result interpretation", "interpret results and reference ranges correctly"),
            ("limitation disclosure", "disclose the limitations and false-positive or false-negative risks of tests"),
            ("abnormal result follow-up", "plan appropriate follow-up for abnormal results"),
            ("result communication", "explain results in terms the patient understands"),
        ],
    ),
    "communication": (
        "General quality of communication with the patient.",
        None,
        [
            ("clarity", "explain information clearly and in plain language"),
            ("empathy", "acknowledge the patient's feelings and concerns"),
            ("active listening", "reflect back and build on what the patient says"),
            ("jargon avoidance", "avoid or explain medical terminology"),
            ("rapport building", "build trust before asking sensitive questions"),
        ],
    ),
    "adaptive dialogue": (
        "How the doctor adapts the conversation to the patient in real time.",
        None,
        [
            ("question management", "ask one focused question at a time rather than overwhelming the patient"),
            ("turn pacing", "keep each turn to a length and pace the patient can follow"),
            ("cue responsiveness", "respond to emotional and verbal cues from the patient"),
            ("clarification seeking", "check understanding and clarify ambiguous answers"),
        ],
    ),
    "interaction efficiency": (
        "Economy of the conversation.",
        None,
        [
            ("conciseness", "keep messages concise without losing substance"),
            ("redundancy", "avoid repeating questions or information already covered"),
            ("focus", "keep the conversation on the patient's goals"),
            ("time to key information", "reach the essential information without unnecessary detours"),
        ],
    ),
    "medication-related communication": (
        "Communication specific to medicines.",
        MED_TX,
        [
            ("side-effect counselling", "explain likely and serious side effects"),
            ("instruction clarity", "give clear instructions on how to take medicines"),
            ("adherence barriers", "discuss barriers to taking medicines as prescribed"),
        ],
    ),
    "patient care": (
        "Overall care and safety of the patient.",
        None,
        [
            ("patient-centredness", "organise the consultation around the patient's needs and goals"),
            ("safety netting", "tell the patient which symptoms require urgent care"),
            ("escalation and referral", "refer or escalate when remote care is not sufficient"),
            ("follow-up arrangements", "arrange appropriate follow-up"),
        ],
    ),
    "ethical practice": (
        "Ethical conduct during the consultation.",
        None,
        [
            ("informed consent", "give the information needed for informed decisions"),
            ("confidentiality", "handle personal information respectfully"),
            ("autonomy", "respect the patient's right to decide"),
            ("honesty about limitations", "be honest about the limits of a text consultation"),
        ],
    ),
    "medication safety": (
        "Avoidance of medication-related harm.",
        MED_TX,
        [
            ("interaction checking", "check for interactions with current medications"),
            ("allergy checking", "check for allergies before recommending medicines"),
            ("pregnancy safety", "address medication safety in pregnancy and lactation", PREGNANCY_MEDS),
            ("high-risk medication warnings", "warn about high-risk medications and misuse"),
        ],
    ),
    "contextual awareness": (
        "Sensitivity to the patient's circumstances.",
        None,
        [
            ("socioeconomic sensitivity", "adapt advice to the patient's resources"),
            ("health literacy adaptation", "adapt explanations to the patient's health literacy"),
            ("cultural sensitivity", "respect cultural and personal values"),
        ],
    ),
    "real-world impact": (
        "Whether the consultation would help the patient in practice.",
        None,
        [
            ("actionability", "leave the patient with clear, feasible next steps"),
            ("resource navigation", "point the patient to relevant services and resources"),
            ("care continuity", "connect advice to the patient's ongoing care"),
        ],
    ),
    "model reliability": (
        "Reliability of the model's output as a clinical interlocutor.",
        None,
        [
            ("factual reliability", "avoid fabricated facts, tests or results"),
            ("internal consistency", "stay consistent with earlier statements in the conversation"),
            ("instruction adherence", "stay within the consultation setting it was given"),
        ],
    ),
    "operational competence": (
        "Handling of the conversational format itself.",
        None,
        [
            ("role maintenance", "remain in the clinician role throughout"),
            ("format appropriateness", "use a message format suited to a patient chat"),
        ],
    ),
}

ANCHORS = {
    "1": "Clearly deficient: the doctor does not {b}, or does so in a way that could mislead or harm the patient.",
    "2": "Below the competence threshold: the doctor tries to {b} but with notable gaps, errors or delays.",
    "3": "Competent: the doctor manages to {b} adequately, with only minor omissions.",
    "4": "Exemplary: the doctor is able to {b} thoroughly, accurately and tailored to this patient throughout.",
}


def slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def dimension(category: str, name: str, behaviour: str, applies: dict | None) -> dict:
    d = {
        "dimension_id": f"{slug(category)}.{slug(name)}",
        "name": name,
        "category": category,
        "scope": "subtask_specific" if applies else "global",
        "description": f"Whether the doctor is able to {behaviour}.",
        "anchors": {k: v.format(b=behaviour) for k, v in ANCHORS.items()},
    }
    if applies:
        d["applies_to"] = {"reasons": applies.get("reasons", []), "objectives": applies.get("objectives", [])}
    return d


def full_catalog() -> dict:
    assert list(SPEC) and set(SPEC) == set(CATEGORIES)
    dims = []
    for category in CATEGORIES:
        _, default_applies, entries = SPEC[category]
        for entry in entries:
            name, behaviour, *override = entry
            dims.append(dimension(category, name, behaviour, override[0] if override else default_applies))
    return {
        "profile": "full",
        "meta_categories": {meta: list(cats) for meta, cats in META_CATEGORIES.items()},
        "category_descriptions": {c: SPEC[c][0] for c in CATEGORIES},
        "dimensions": dims,
    }


def toy_catalog() -> dict:
    med = {"objectives": ["medication_advice", "treatment_advice"]}
    dims = [
        dimension("communication", "clarity", "explain information clearly and in plain language", None),
        dimension("communication", "empathy", "acknowledge the patient's feelings and concerns", None),
        dimension("communication", "active listening", "reflect back and build on what the patient says", None),
        dimension("communication", "jargon avoidance", "avoid or explain medical terminology", None),
        dimension("clinical reasoning", "data integration", "combine history, symptoms and context into a coherent picture", None),
        dimension("clinical reasoning", "uncertainty handling", "acknowledge and manage diagnostic and therapeutic uncertainty", None),
        dimension("clinical reasoning", "red flag recognition", "notice and act on warning signs that need urgent attention", None),
        dimension("medication safety", "interaction checking", "check for interactions with current medications", med),
        dimension("medication safety", "allergy checking", "check for allergies before recommending medicines", med),
        dimension("medication safety", "dose counselling", "explain safe dosing of the recommended medicine", {"objectives": ["medication_advice"]}),
    ]
    used = ("communication", "clinical reasoning", "medication safety")
    return {
        "profile": "subset",
        "meta_categories": {
            "Communication Skills": ["communication"],
            "Core Medical Competence": ["clinical reasoning"],
            "Patient Safety & Care": ["medication safety"],
        },
        "category_descriptions": {c: SPEC[c][0] for c in used},
        "dimensions": dims,
    }


def main() -> None:
    for name, doc in (("catalog", full_catalog()), ("toy_catalog", toy_catalog())):
        parse_catalog(doc)
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(doc['dimensions'])} dimensions)")


if __name__ == "__main__":
    main()
