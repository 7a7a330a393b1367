#pragma once

#include <cctype>
#include <map>
#include <string>

#include "dppsumm/errors.hpp"

namespace dppsumm {

enum class PromptTemplateId {
  extract_kp,
  rewrite,
  naive,
  naive_relevance,
  llm_select,
  llm_select_relevance,
  judge,
  augment_questions,
  generate_intents,
};

inline std::string prompt_template_name(PromptTemplateId id) {
  switch (id) {
    case PromptTemplateId::extract_kp: return "extract_kp";
    case PromptTemplateId::rewrite: return "rewrite";
    case PromptTemplateId::naive: return "naive";
    case PromptTemplateId::naive_relevance: return "naive_relevance";
    case PromptTemplateId::llm_select: return "llm_select";
    case PromptTemplateId::llm_select_relevance: return "llm_select_relevance";
    case PromptTemplateId::judge: return "judge";
    case PromptTemplateId::augment_questions: return "augment_questions";
    case PromptTemplateId::generate_intents: return "generate_intents";
  }
  throw ValidationError("unknown prompt template id");
}

// The template bodies are fixed wording the pipeline behavior was tuned
// against, including line breaks, spacing quirks, and trailing whitespace.
// Do not reflow or clean up these strings; <NAME> slots are filled by
// render_prompt.
inline const std::string& prompt_template(PromptTemplateId id) {
  static const std::string extract_kp = R"__TPL__(Summarize all the content in this article
into a list of simple, one-sentence,
bullet points. Make sure that each bullet
point is atomic and can be understood
without any external context. Also, make
sure that all the information in the
article is covered in the list.
Article:
<ARTICLE>    
)__TPL__";
  static const std::string rewrite = R"__TPL__(Read the following set of key points
obtained from a set of news stories about
a specific topic. From the set, you have
a subset of selected key points. Rewrite
the selected key points into a coherent
report that includes all the details
present in the key points. Make sure the
summary is fluent and coherent. Elaborate
when you summarize diverse or conflicting
information. Make sure to include all of
the factual details from the key points
because we want to use the report to
answer questions. Remember, your output
should be a summary that discusses and
elaborates on the diverse and conflicting
information presented across the articles.
You need to elaborate on the differences
rather than only mentioning which topic
they differ. Don't worry about the summary
being too lengthy. You must give your
response in a structured format:
```Report: [your report]```, where 
[your report] is your generated report.
--------
SELECTED KEY POINTS
--------
<SELECTED KEYPOINTS>
)__TPL__";
  static const std::string naive = R"__TPL__(Read the following news articles. Produce 
a summary that only covers diverse
and conflicting information across the
following articles, without discussing 
the information all articles agree upon.
Elaborate when you summarize diverse or
conflicting information by stating what
information different sources cover and
how is the information diverse or
conflicting. You must give your answer in a
structured format: ```Report: 
[your report]```, where [your report] is
your generated report.
---------
ARTICLES
<ARTICLES>
---------
Remember, your output should be a summary
that discusses and elaborates on the
diverse and conflicting information
presented across the articles. You need
to elaborate on the differences rather 
than only mentioning which topic they  
differ. Don't worry about the summary
being too lengthy.     
)__TPL__";
  static const std::string naive_relevance = R"__TPL__(Read the following news articles and 
associated user intent. Produce 
a summary that only covers the diverse
and conflicting information across the
following articles relevant to the user
intent, without discussing 
the information all articles agree upon.
Elaborate when you summarize diverse or
conflicting information by stating what
information different sources cover and
how is the information diverse or
conflicting. Balance diversity of content 
with relevance to user intent. You 
must give your answer in a
structured format: ```Report: 
[your report]```, where [your report] 
is your generated report.
---------
ARTICLES
<ARTICLES>
---------
USER INTENT
<USER INTENT>
---------
Remember, your output should be a summary
that is relevant to the user intent and
discusses and elaborates on the
diverse and conflicting information
presented across the articles. You need
to elaborate on the differences rather 
than only mentioning which topic they  
differ. Don't worry about the summary
being too lengthy.     
)__TPL__";
  static const std::string llm_select = R"__TPL__(Read the following set of key points
obtained from a set of news stories about
a specific topic. From the set, you have
a select a subset that ensure maximum
coverage of the articles provided. 
Make sure that all the important factual
details from the articles are covered
in the selected key points. Ensure that
you  cover all of the diverse viewpoints
mentioned in the articles. Your output
should be a list of selected key points
where each selected one identically 
matches the corresponding key point 
You must give your
response in a structured format:
```Selected Key Points: [your list]```.
--------
KEY POINTS
<ALL KEYPOINTS>
---------
ARTICLES
<ARTICLES>
---------

)__TPL__";
  static const std::string llm_select_relevance = R"__TPL__(Read the following set of key points
obtained from a set of news stories about
a specific topic and the associated user
intent. From the set, you have
a select a subset that are relevant to the
user intent and ensure maximum
coverage of the articles provided. 
Make sure that all the important factual
details from the articles that are 
relevant to the user intent are covered
in the selected key points. Ensure that
you  cover all of the diverse viewpoints
mentioned in the articles. Your output
should be a list of selected key points
where each selected one identically 
matches the corresponding key point 
You must give your
response in a structured format:
```Selected Key Points: [your list]```.
--------
KEY POINTS
<ALL KEYPOINTS>
---------
ARTICLES
<ARTICLES>
---------
USER INTENT
<USER INTENT>
---------
)__TPL__";
  static const std::string judge = R"__TPL__(Please act as an impartial judge and
evaluate the quality of the response
provided by an AI assistant. Your
evaluation should consider coverage of
the summary with regard to the question
and answers (i.e. how much information
in the question and answers is covered
by the summary). Begin your evaluation
by deciding if the question is
answerable from the summary - this 
should be a true or false answer. Be as
objective as possible. You next need to
evaluate if the information to answer a
question from the summary matches the
reference answer. The answer to whether
the answer matches should be “0” for
insufficient coverage, and 1 indicates
sufficient coverage. The output should
strictly be in the format of a JSON with
two keys, 'answerable' with the value
true or false, and 'coverage' with the
answer 0 or 1. Return nothing else.
--------
Model Generated Response:
<SUMMARY>
--------
Question:
<QUESTION>
--------
Reference Answer:
<REFERENCE ANSWER>
)__TPL__";
  static const std::string augment_questions = R"__TPL__(Write down 10 factual questions that can
be answered from the article below. These 
questions, and their answer should relate
the most important facts of the event 
being reported in the article. Include 
questions that require reasoning about 
the facts in the document. 
Make sure you create questions
such that all the important information 
in the document appears in the answers. 
Each question should be up to 14 words. 
Return a numbered list of questions 
with answers and nothing else.
Article:
<ARTICLE>
    
)__TPL__";
  static const std::string generate_intents = R"__TPL__(Read the following set of news articles
about a specific topic. Write down 5
distinct user intents that different
readers might have when asking for a
summary of this news story. Each intent
should reflect a different information
need, making some perspectives from the
articles more or less relevant. Each
intent should be a single sentence.
Return a numbered list of user intents
and nothing else.
Articles:
<ARTICLES>
)__TPL__";
  switch (id) {
    case PromptTemplateId::extract_kp: return extract_kp;
    case PromptTemplateId::rewrite: return rewrite;
    case PromptTemplateId::naive: return naive;
    case PromptTemplateId::naive_relevance: return naive_relevance;
    case PromptTemplateId::llm_select: return llm_select;
    case PromptTemplateId::llm_select_relevance: return llm_select_relevance;
    case PromptTemplateId::judge: return judge;
    case PromptTemplateId::augment_questions: return augment_questions;
    case PromptTemplateId::generate_intents: return generate_intents;
  }
  throw ValidationError("unknown prompt template id");
}

// Substitutes every <PLACEHOLDER> slot (upper-case words, spaces allowed)
// with its binding. Replacement text is never rescanned, so articles
// containing angle brackets cannot inject further substitutions.
inline std::string render_prompt(PromptTemplateId id,
                                 const std::map<std::string, std::string>& bindings) {
  const std::string& body = prompt_template(id);
  std::string out;
  out.reserve(body.size());
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '<') {
      std::size_t j = i + 1;
      while (j < body.size() && (std::isupper(static_cast<unsigned char>(body[j])) || body[j] == ' ')) {
        ++j;
      }
      if (j < body.size() && body[j] == '>' && j > i + 1) {
        std::string name = body.substr(i + 1, j - i - 1);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
          throw ValidationError("render_prompt(" + prompt_template_name(id) +
                                "): no binding for placeholder '" + name + "'");
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(body[i]);
    ++i;
  }
  return out;
}

}  // namespace dppsumm
