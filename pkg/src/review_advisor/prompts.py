"""Versioned prompt templates for every agent role.

Templates use ``string.Template`` placeholders (``$name``) because several
of them embed literal JSON braces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from string import Template

PROMPT_VERSION = "1"

_NUMBER_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"]
ORDINALS = ["first", "second", "third", "fourth", "fifth"]


def number_word(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def or_list(words: list[str]) -> str:
    """``["a", "b", "c"]`` -> ``"a, b or c"``."""
    if len(words) == 1:
        return words[0]
    return ", ".join(words[:-1]) + " or " + words[-1]


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: str
    text: str

    def render(self, **slots: object) -> str:
        return Template(self.text).substitute({k: str(v) for k, v in slots.items()})


ISSUE_EXAMPLE_REVIEWS = (
    '"The house looked great in the photos, but once I moved in the reality was very different. '
    "There are cracks in the walls and baseboards, sloppy patchwork that looks like it was rushed, "
    "and the sprinkler system doesn't work at all. I was told I'd have to spend thousands to fix it, "
    "just a month after moving in. The windows fall off track, rain seeps in because the seals are "
    'broken, and even the fridge was missing the water and air filters."\n'
    "\n"
    "\"Honestly the worst service I've ever dealt with. Their employees hang up on you all the time, "
    "and when they don't, you're stuck waiting on hold for hours. I've spent so much time on the phone "
    "trying to get them to fix an issue they admitted was a mistake, but nothing ever gets resolved. "
    'Multiple people promised me a call back and, of course, no one ever did."'
)

ISSUE_EXAMPLE_OUTPUT = """{
"a": {
    "theme": "Maintenance",
    "issues": ["Sprinkler system damaged", "Windows falling off track", "Cracks in the wall"]
},
"b": {
    "theme": "Customer Support",
    "issues": ["Employees hang up on you constantly", "You have to wait for hours on the phone", "No call backs from support"]
}
}"""

ISSUE = PromptTemplate(
    "issue",
    PROMPT_VERSION,
    "You are a consultant hired by a large corporation. You will be given $count negative $noun from customers.\n"
    "Your task is to identify the major themes, and list the specific issues the customers faced under that theme.\n"
    "Do not include explanations or restatements. The issues should be descriptive, concise and clear.\n"
    "\n"
    "The output must strictly follow the json format.\n"
    "Here is an example:\n"
    "\n"
    "My reviews are:\n" + ISSUE_EXAMPLE_REVIEWS + "\n" + ISSUE_EXAMPLE_OUTPUT + "\n"
    "\n"
    "Rules:\n"
    "1) A theme can contain at most 5 issues.\n"
    "2) The themes and the issues under them should not be repetitive.\n"
    "3) If there are multiple issues that are similar to each other, merge them into one.\n"
    "4) An issue can belong to at most one theme.\n"
    "\n"
    "My reviews are:\n"
    "$reviews\n",
)

RECOMMENDATION = PromptTemplate(
    "recommendation",
    PROMPT_VERSION,
    "You are a consultant tasked with solving issues faced by customers. "
    "You will be given an issue, along with the broad theme associated with that issue.\n"
    "\n"
    "Give 3 to 4 actionable business recommendations suited for the following issue and theme:\n"
    "$theme\n"
    "$issue\n"
    "You must only generate the recommendations, and not any other additional text, explanations, benefits.\n",
)

REVISION = PromptTemplate(
    "revision",
    PROMPT_VERSION,
    "\n"
    "Your previous recommendations were:\n"
    "$prior\n"
    "\n"
    "An evaluator reviewed them and gave this feedback:\n"
    "$feedback\n"
    "\n"
    "Revise the recommendations so that they address the feedback. "
    "Give 3 to 4 recommendations as a numbered list and nothing else.\n",
)

EVALUATION_EXAMPLES = """[
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Introduce a pre-arrival web check-in system that allows guests to upload their identification, confirm payment details, and choose their room preferences before arriving. This will reduce manual data entry at the front desk and speed up the process, especially during peak hours when lines tend to build up quickly.",
    "SRAC": [5, 5, 5, 4],
    "explanation": "Highly specific, relevant, and actionable advice that directly addresses the issue. Slightly long but precise and feasible for implementation."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Encourage guests to arrive earlier in the day or during less busy times to avoid crowds. You could include this suggestion in their booking confirmation email or on the website so they can plan accordingly. This would help distribute guest arrivals throughout the day and reduce peak congestion.",
    "SRAC": [3, 4, 4, 4],
    "explanation": "Moderately specific and relevant. It provides a practical tip, though it doesn't fundamentally fix the process. Reasonably concise."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Consider redesigning the entire hotel reception area to include a coffee bar, lounge seating, and entertainment screens. Guests could relax while waiting, which may make the wait seem shorter. It might also increase overall satisfaction and generate some additional revenue from the lobby cafe.",
    "SRAC": [3, 2, 2, 3],
    "explanation": "Creative but not very relevant or actionable in solving long wait times directly. Focuses more on perception than process improvement."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Use AI-based forecasting tools to analyze booking data, flight schedules, and local events to predict check-in surges. Adjust staffing levels dynamically based on these forecasts and automate alerts for the management team to ensure resource allocation matches real-time demand.",
    "SRAC": [5, 5, 5, 4],
    "explanation": "Excellent strategic solution. Highly specific, directly relevant, and very actionable with the right tools. Slightly verbose but effective."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Hire more employees to make check-in faster. The more people you have, the better and faster everything will be for guests. This should solve the issue without needing to change any systems or technology.",
    "SRAC": [2, 3, 3, 5],
    "explanation": "Very concise but oversimplified. Not specific about timing, training, or efficiency improvements. Lacks depth and sustainability."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Install digital check-in kiosks at multiple points around the lobby where guests can verify their ID, pay deposits, and receive a digital key. This will streamline standard check-ins, leaving staff free to handle exceptions or special requests more quickly.",
    "SRAC": [5, 5, 4, 4],
    "explanation": "Clear, specific, and relevant. Actionable though requires upfront investment. Balanced in detail and brevity."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Develop a multilingual mobile concierge chatbot to assist with pre-arrival check-in, explain policies, and collect preferences. The chatbot can guide guests through ID verification and notify reception staff before arrival to ensure all details are ready, cutting down on face-to-face processing time.",
    "SRAC": [5, 5, 5, 3],
    "explanation": "Very specific and forward-thinking. Highly actionable with good infrastructure, though slightly long and tech-heavy."
  },
  {
    "issue": "Long wait times at check-in (30-60+ minutes)",
    "advice": "Post motivational signs near the check-in counter reminding guests to stay patient and positive while they wait in line. You could also play calming background music to make the experience more pleasant for everyone.",
    "SRAC": [2, 2, 2, 4],
    "explanation": "Not specific or relevant to solving the root cause. Actionable but superficial, it improves perception, not efficiency."
  }
]"""

EVALUATION = PromptTemplate(
    "evaluation",
    PROMPT_VERSION,
    "Evaluate the advice: $advice for the problem: $issue. "
    "The issue is associated with the following theme: $theme.\n"
    "Provide scores from 1 (poor) to 5 (excellent) for Specificity, Relevance, Actionability and Concision.\n"
    "If the advice is lacking, provide feedback on how to improve it. Here are examples of how to score:\n"
    + EVALUATION_EXAMPLES
    + "\n"
    "\n"
    'Respond with JSON only, in the form {"SRAC": [<S>, <R>, <A>, <C>], '
    '"feedback": "<how to improve the advice, or an empty string if nothing is lacking>"}.\n',
)

RANKING = PromptTemplate(
    "ranking",
    PROMPT_VERSION,
    "You are a senior consultant hired by a corporation who wishes to improve customer satisfaction. "
    "You will be given $count recommendations to solve an issue faced by the customer. "
    "You must decide which one of the $count - $ordinals is the best option. "
    "Consider all aspects from the perspective of the corporation such as practicality, "
    "cost of implementation and efficacy in solving the issue.\n"
    "\n"
    "Issue: $issue\n"
    "Theme: $theme\n"
    "\n"
    "$blocks\n"
    "\n"
    'Respond with JSON only, in the form {"choice": <$choices>, "reason": "<one or two sentences>"}.\n',
)

JUDGE_DIMENSIONS_TEXT = """1. Actionability: Does the recommendation spell out concrete steps that could start now, with owners, timing and procedure? 1 = slogan-like, 5 = ready-to-run plan.
2. Specificity: Does it name concrete details (where, when, who) that trace back to the customer evidence? 1 = generic cliche, 5 = precise and evidence-backed.
3. Feasibility: Can a typical small-to-medium business carry it out given cost, staff skills and effort? 1 = unrealistic, 5 = easily executable with typical resources.
4. Expected Impact: How likely is it to move KPIs such as NPS, retention or operational efficiency, given the identified issues? 1 = negligible, 5 = material and well grounded.
5. Novelty: Does it offer non-obvious, review-informed leverage beyond basic hygiene fixes? 1 = commonplace, 5 = fresh insight.
6. Non-redundancy: Does it synthesise and prioritise rather than restate the reviews or repeat itself? 1 = repetitive paraphrase, 5 = compact integration.
7. Bias: Is it free of unfounded assumptions and stereotypes, staying evidence-based and objective? 1 = clearly biased, 5 = objective.
8. Reading Clarity: Is the text clear, coherent and professionally written? 1 = confusing, 5 = very clear."""

JUDGE = PromptTemplate(
    "judge",
    PROMPT_VERSION,
    "You are an expert evaluator assessing business recommendations.\n"
    "Rate the following recommendation on all 8 quality dimensions.\n"
    "\n"
    "CONTEXT:\n"
    "Business Type: $business_context\n"
    "Original Reviews/Issues: $original_context\n"
    "\n"
    "RECOMMENDATION TO EVALUATE:\n"
    "$recommendation\n"
    "\n"
    "DIMENSIONS TO RATE (1-5 scale for each):\n" + JUDGE_DIMENSIONS_TEXT + "\n"
    "\n"
    "RESPONSE FORMAT (JSON only):\n"
    "{\n"
    '    "actionability": <integer 1-5>,\n'
    '    "specificity": <integer 1-5>,\n'
    '    "feasibility": <integer 1-5>,\n'
    '    "expected_impact": <integer 1-5>,\n'
    '    "novelty": <integer 1-5>,\n'
    '    "non_redundancy": <integer 1-5>,\n'
    '    "bias": <integer 1-5>,\n'
    '    "reading_clarity": <integer 1-5>\n'
    "}\n",
)

VANILLA = PromptTemplate(
    "vanilla",
    PROMPT_VERSION,
    "You are a consultant hired by a large corporation. Below are $count negative $noun from customers.\n"
    "Give actionable business recommendations that would resolve the problems these customers faced.\n"
    "\n"
    "My reviews are:\n"
    "$reviews\n",
)

REGISTRY: dict[str, PromptTemplate] = {
    t.name: t for t in (ISSUE, RECOMMENDATION, REVISION, EVALUATION, RANKING, JUDGE, VANILLA)
}


def get(name: str) -> PromptTemplate:
    return REGISTRY[name]


def fingerprint() -> str:
    """Digest of every registered template; changes whenever any wording changes."""
    h = hashlib.sha256()
    for name in sorted(REGISTRY):
        t = REGISTRY[name]
        h.update(f"{t.name}\x00{t.version}\x00{t.text}\x00".encode("utf-8"))
    return h.hexdigest()[:16]
