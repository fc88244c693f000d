#include "bcsynth/llm.hpp"

namespace bcsynth {

std::string_view template_text(TemplateId id) {
  switch (id) {
    case TemplateId::SimilaritySelect:
      return R"P(TARGET PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Initial set: {INITIAL_SET}
Unsafe set: {UNSAFE_SET}

COMPATIBLE CANDIDATES (all are fundamentally similar):
{CANDIDATES_TEXT}

Which candidate has the most similar problem type and structure to the target problem?

Focus on: system structure, problem type, and mathematical pattern similarity.

Answer with only the candidate number (1, 2, 3, etc.):)P";
    case TemplateId::SynthFirst:
      return R"P({CONTEXT}

Main Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Design a barrier certificate B(x) that satisfies:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Be very careful - don't make it more complex than needed.

CRITICAL: Use ONLY real numbers in the barrier expression. No variables like 'c' or 'ε'.

Solve specifically for THIS problem with appropriate coefficients.

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

BARRIER: [expression with numbers only])P";
    case TemplateId::SynthFirstCtrl:
      return R"P({CONTEXT}

Main Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

CONTROLLER SYNTHESIS: This system has control inputs {CONTROLLER_PARAMETERS}.

You need to design BOTH:
1. Barrier certificate B(x)
2. Controller expressions for {CONTROLLER_PARAMETERS}

The controller u(x) will be substituted into dynamics to create closed-loop system.

Design a barrier certificate B(x) that satisfies:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Be very careful - don't make it more complex than needed.

Design both barrier certificate B(x) AND controller expressions that work
together to satisfy all conditions.

CRITICAL:
- Use ONLY real numbers in both barrier and controller expressions.
No variables like 'c' or 'ε'.
- Solve specifically for THIS problem with appropriate coefficients.
- Controller must be implementable with realistic actuators
- Ensure controller bounds are reasonable (avoid extremely large values)

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

BARRIER: [barrier expression with numbers only]
CONTROLLER: [controller expressions for each parameter, comma-separated])P";
    case TemplateId::SynthNext:
      return R"P(Previous attempts failed:
{PREVIOUS_ATTEMPTS}

Improve the barrier structure to satisfy all conditions.

Main Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Design a barrier certificate B(x) that satisfies:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Learn from previous failures. You can change structure of TEMPLATE if needed. In this step, the goal is to improve the structure of the templates, not refine the parameters.

CRITICAL: Use ONLY real numbers in the barrier expression. No variables like 'c' or 'ε'. Solve specifically for THIS problem with appropriate coefficients.

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

BARRIER: [expression with numbers only])P";
    case TemplateId::SynthNextCtrl:
      return R"P(Previous barrier + controller attempts failed:
{PREVIOUS_ATTEMPTS}

Improve the barrier + controller structure to satisfy all conditions.

Main Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

CONTROLLER SYNTHESIS:
This system has control inputs {CONTROLLER_PARAMETERS}. You need to
design BOTH:
1. Barrier certificate B(x)
2. Controller expressions for {CONTROLLER_PARAMETERS}

The controller u(x) will be substituted into dynamics to create closed-loop system.

Design a barrier certificate B(x) that satisfies:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Learn from previous failures. You can change structure of TEMPLATE if needed. In this step, the goal is to improve the structure of the templates, not refine the parameters.

Design both barrier certificate B(x) AND controller expressions that work
together to satisfy all conditions.

CRITICAL:
- Use ONLY real numbers in both barrier and controller expressions.
No variables like 'c' or 'ε'.
- Solve specifically for THIS problem with appropriate coefficients.
- Controller must be implementable with realistic actuators
- Ensure controller bounds are reasonable (avoid extremely large values)

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

BARRIER: [barrier expression with numbers only]
CONTROLLER: [controller expressions for each parameter, comma-separated])P";
    case TemplateId::RefineCoeff:
      return R"P(Original barrier: {BARRIER} {FAILED_INFO}

{REFINEMENT_HISTORY}

Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Try a different coefficient distribution. You can redistribute the coefficients between ALL terms (sometimes it is necessary for all terms to have different coefficients), but DO NOT change structure

Requirements:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

REFINED_BARRIER: [expression with numbers only])P";
    case TemplateId::RefineCoeffCtrl:
      return R"P(Original barrier: {BARRIER}, Original controller: {CONTROLLER}, {FAILED_INFO}

{REFINEMENT_HISTORY}

Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Try a different coefficient distribution for both barrier and controller.
You can redistribute the coefficients between ALL terms, but DO NOT change structure

CONTROLLER SYNTHESIS CONSTRAINTS:
1. Controller parameters: {CONTROLLER_PARAMETERS}
2. Use smooth, bounded functions (avoid extremely large values)
3. Controller must work harmoniously with the barrier
4. Ensure closed-loop stability

Requirements:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

REFINED_BARRIER: [barrier expression with numbers only]
REFINED_CONTROLLER: [controller expressions for each parameter, comma-separated])P";
    case TemplateId::RefineStruct:
      return R"P(Original barrier: {BARRIER} {FAILED_INFO}

{REFINEMENT_HISTORY}

Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Previous coefficient adjustments failed. Consider changing the barrier structure if needed while keeping the same polynomial degree. You can modify the terms or their combinations.

Requirements:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

REFINED_BARRIER: [expression with numbers only])P";
    case TemplateId::RefineStructCtrl:
      return R"P(Original barrier: {BARRIER}, Original controller: {CONTROLLER}, {FAILED_INFO}

{REFINEMENT_HISTORY}

Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}

Previous coefficient adjustments failed. Consider changing the barrier and/or controller structure if needed while keeping the same polynomial degree. You can modify the terms or their combinations.

CONTROLLER SYNTHESIS CONSTRAINTS:
1. Controller parameters: {CONTROLLER_PARAMETERS}
2. Use smooth, bounded functions (avoid extremely large values)
3. Controller must work harmoniously with the barrier
4. Ensure closed-loop stability

Requirements:
1. B(x) ≤ 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}

Analyze carefully but be concise. Give precise answer without long explanations.

Format your response as (don't make it bold):

REFINED_BARRIER: [barrier expression with numbers only]
REFINED_CONTROLLER: [controller expressions for each parameter, comma-separated])P";
    case TemplateId::SolverSelect:
      return R"P(Select the best SMT solver based on barrier expression and the dynamical system.

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

AVAILABLE SOLVERS:
- cvc5
- z3
- yices

Without long explanations, give a short and precise answer.

Format your response as:

SOLVER: [solver name])P";
    case TemplateId::TimeoutRetry:
      return R"P(Solver {SOLVER_NAME} timed out after {TIMEOUT_MS}ms.

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

Given the above information, should we attempt again with more time, or is this barrier too complex to verify?

Without long explanations, give a short and precise answer.

Format your response as:

RETRY: yes or no
TIMEOUT_MULTIPLIER: [number] (only if RETRY is yes, e.g., 1.5 or 2.0))P";
    case TemplateId::SolverError:
      return R"P(Solver {SOLVER_NAME} failed during verification.

ERROR: {ERROR_TYPE}
MESSAGE: {ERROR_MESSAGE}

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

REMAINING SOLVERS:
{REMAINING_SOLVERS_LIST}

Select a different solver to try.

Without long explanations, give a short and precise answer.

Format your response as:

NEXT_SOLVER: [solver name])P";
  }
  return {};
}

}  // namespace bcsynth
