#include "persona_harness/overlap_metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/text.hpp"

namespace ph {

namespace {

// Maps strings of two sequences to dense ids shared between them.
class Interner {
 public:
  std::uint32_t id(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, static_cast<std::uint32_t>(ids_.size()));
    return it->second;
  }

  std::vector<std::uint32_t> ids(std::span<const std::string> tokens) {
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// Inputs up to this length are matched with 64-bit position masks; longer
// ones sort.
constexpr std::size_t kShort = 64;

// out[i] has bit j set where ref[j] == cand[i].
void match_masks(std::span<const std::uint32_t> cand, std::span<const std::uint32_t> ref, std::uint64_t* out) {
  for (std::size_t i = 0; i < cand.size(); ++i) {
    std::uint64_t m = 0;
    for (std::size_t j = 0; j < ref.size(); ++j) m |= static_cast<std::uint64_t>(ref[j] == cand[i]) << j;
    out[i] = m;
  }
}

// Sum over types of min(count in a, count in b).
std::size_t clipped_overlap(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() <= kShort && b.size() <= kShort) {
    std::uint64_t masks[kShort];
    match_masks(a, b, masks);
    std::uint64_t used = 0;
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::uint64_t free = masks[i] & ~used;
      used |= free & (0 - free);  // lowest free copy
      overlap += free != 0;
    }
    return overlap;
  }
  std::vector<std::uint32_t> x(a.begin(), a.end());
  std::vector<std::uint32_t> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0, overlap = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] < y[j]) {
      ++i;
    } else if (y[j] < x[i]) {
      ++j;
    } else {
      ++overlap;
      ++i;
      ++j;
    }
  }
  return overlap;
}

}  // namespace

double bleu1_ids(std::span<const std::uint32_t> cand, std::span<const std::uint32_t> ref) {
  if (cand.empty()) return 0.0;
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double precision = static_cast<double>(clipped_overlap(cand, ref)) / c;
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return precision * bp;
}

Rouge1 rouge1_ids(std::span<const std::uint32_t> cand, std::span<const std::uint32_t> ref) {
  Rouge1 out;
  const std::size_t overlap = clipped_overlap(cand, ref);
  if (overlap == 0) return out;
  out.precision = static_cast<double>(overlap) / static_cast<double>(cand.size());
  out.recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  out.f1 = static_cast<double>(2 * overlap) / static_cast<double>(cand.size() + ref.size());
  return out;
}

namespace {

// One alignment stage. For each unaligned candidate position (right to
// left) take the right-most unaligned reference position with equal key.
// `matches[i]` holds the reference positions whose key equals candidate i's.
void align_stage_short(const std::uint64_t* matches, std::size_t n_cand, int* cand_to_ref, std::uint64_t& ref_used) {
  for (std::size_t ii = n_cand; ii-- > 0;) {
    if (cand_to_ref[ii] >= 0) continue;
    const std::uint64_t free = matches[ii] & ~ref_used;
    if (free == 0) continue;
    const int j = std::bit_width(free) - 1;
    cand_to_ref[ii] = j;
    ref_used |= std::uint64_t{1} << j;
  }
}

// The same stage for long inputs.
void align_stage(std::span<const std::uint32_t> cand_keys, std::span<const std::uint32_t> ref_keys,
                 std::vector<int>& cand_to_ref, std::vector<char>& ref_used) {
  // Unaligned reference positions sorted by (key, position).
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pool;
  pool.reserve(ref_keys.size());
  for (std::uint32_t j = 0; j < ref_keys.size(); ++j) {
    if (!ref_used[j]) pool.emplace_back(ref_keys[j], j);
  }
  std::sort(pool.begin(), pool.end());
  // remaining[k] = number of still-available entries in the run starting at k.
  std::vector<std::uint32_t> remaining(pool.size(), 0);
  for (std::size_t k = 0; k < pool.size();) {
    std::size_t e = k;
    while (e < pool.size() && pool[e].first == pool[k].first) ++e;
    remaining[k] = static_cast<std::uint32_t>(e - k);
    k = e;
  }
  for (std::size_t ii = cand_keys.size(); ii-- > 0;) {
    if (cand_to_ref[ii] >= 0) continue;
    auto it = std::lower_bound(pool.begin(), pool.end(), std::make_pair(cand_keys[ii], 0u));
    if (it == pool.end() || it->first != cand_keys[ii]) continue;
    const auto start = static_cast<std::size_t>(it - pool.begin());
    if (remaining[start] == 0) continue;
    const std::uint32_t j = pool[start + remaining[start] - 1].second;
    --remaining[start];
    cand_to_ref[ii] = static_cast<int>(j);
    ref_used[j] = 1;
  }
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

double bleu1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  Interner in;
  const auto c = in.ids(candidate);
  const auto r = in.ids(reference);
  return bleu1_ids(c, r);
}

Rouge1 rouge1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  Interner in;
  const auto c = in.ids(candidate);
  const auto r = in.ids(reference);
  return rouge1_ids(c, r);
}

double meteor_lite_ids(std::span<const std::uint32_t> cand_words,
                       std::span<const std::uint32_t> cand_stems,
                       std::span<const std::uint32_t> ref_words,
                       std::span<const std::uint32_t> ref_stems, const MeteorOptions& options) {
  if (cand_words.empty() || ref_words.empty()) return 0.0;
  int c2r_short[kShort];
  std::vector<int> c2r_long;
  int* cand_to_ref = c2r_short;
  if (cand_words.size() <= kShort && ref_words.size() <= kShort) {
    std::uint64_t word_match[kShort], stem_match[kShort];
    std::fill_n(c2r_short, cand_words.size(), -1);
    match_masks(cand_words, ref_words, word_match);
    std::uint64_t used = 0;
    align_stage_short(word_match, cand_words.size(), c2r_short, used);
    if (options.stem_matching) {
      match_masks(cand_stems, ref_stems, stem_match);
      align_stage_short(stem_match, cand_words.size(), c2r_short, used);
    }
  } else {
    c2r_long.assign(cand_words.size(), -1);
    std::vector<char> used(ref_words.size(), 0);
    align_stage(cand_words, ref_words, c2r_long, used);
    if (options.stem_matching) align_stage(cand_stems, ref_stems, c2r_long, used);
    cand_to_ref = c2r_long.data();
  }

  // A chunk starts at every match that does not extend the previous one
  // on both sides.
  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::ptrdiff_t prev_cand = -2;
  int prev_ref = -2;
  for (std::size_t i = 0; i < cand_words.size(); ++i) {
    const int j = cand_to_ref[i];
    const bool hit = j >= 0;
    const auto ci = static_cast<std::ptrdiff_t>(i);
    const bool continues = ci == prev_cand + 1 && j == prev_ref + 1;
    chunks += hit && !continues;
    matches += hit;
    prev_cand = hit ? ci : prev_cand;
    prev_ref = hit ? j : prev_ref;
  }
  if (matches == 0) return 0.0;

  // PR / (alpha P + (1 - alpha) R) with P = m/c and R = m/r.
  const double m = static_cast<double>(matches);
  const double fmean = m / (options.alpha * static_cast<double>(ref_words.size()) +
                            (1.0 - options.alpha) * static_cast<double>(cand_words.size()));
  const double frag =
      matches > 1 ? static_cast<double>(chunks - 1) / static_cast<double>(matches - 1) : 0.0;
  const double penalty =
      options.gamma * (options.beta == 3.0 ? frag * frag * frag : std::pow(frag, options.beta));
  return fmean * (1.0 - penalty);
}

double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference,
                   const MeteorOptions& options) {
  Interner words;
  Interner stems;
  std::unordered_map<std::string, std::string> stem_cache;
  auto stem_ids = [&](std::span<const std::string> toks) {
    std::vector<std::uint32_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) {
      auto it = stem_cache.find(t);
      if (it == stem_cache.end()) it = stem_cache.emplace(t, text::porter_stem(t)).first;
      out.push_back(stems.id(it->second));
    }
    return out;
  };
  const auto cw = words.ids(candidate);
  const auto rw = words.ids(reference);
  const auto cs = stem_ids(candidate);
  const auto rs = stem_ids(reference);
  return meteor_lite_ids(cw, cs, rw, rs, options);
}

// -- frequency table -------------------------------------------------------

FrequencyTable::FrequencyTable(std::unordered_map<std::string, double> zipf, std::string source_id)
    : source_id_(std::move(source_id)) {
  for (auto& [w, z] : zipf) zipf_.emplace(text::to_lower(w), z);
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open frequency table " + path.string());
  std::unordered_map<std::string, double> zipf;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw SchemaError(where, "zipf", "expected word<TAB>zipf");
    try {
      zipf[text::to_lower(line.substr(0, tab))] = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw SchemaError(where, "zipf", "not a number");
    }
  }
  return FrequencyTable(std::move(zipf), path.filename().string());
}

double FrequencyTable::zipf(std::string_view word) const {
  auto it = zipf_.find(text::to_lower(word));
  return it == zipf_.end() ? 0.0 : it->second;
}

std::set<std::string> rare_words(std::string_view text, const FrequencyTable& table,
                                 double threshold) {
  std::set<std::string> out;
  for (auto& t : text::alpha_tokens(text)) {
    if (table.zipf(t) < threshold) out.insert(std::move(t));
  }
  return out;
}

RareWordOverlap rare_word_overlap(std::string_view biography, std::string_view turns,
                                  const FrequencyTable& table, double threshold) {
  RareWordOverlap out;
  const auto rare = rare_words(biography, table, threshold);
  const auto turn_tokens = text::alpha_tokens(turns);
  const std::set<std::string> turn_set(turn_tokens.begin(), turn_tokens.end());
  std::set_intersection(rare.begin(), rare.end(), turn_set.begin(), turn_set.end(),
                        std::inserter(out.shared, out.shared.end()));
  out.flag = !out.shared.empty();
  return out;
}

// -- report ----------------------------------------------------------------

OverlapReport overlap_report(const std::vector<Dialogue>& dialogues, const Corpus& profiles,
                             const FrequencyTable& table, double threshold, int biography_cap) {
  OverlapReport report;
  report.threshold = threshold;
  struct Acc {
    std::size_t dialogues = 0, flagged = 0, entries = 0;
    double meteor = 0, bleu = 0, rouge = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;

  for (const auto& d : dialogues) {
    const std::string arm = d.source == DialogueSource::gold ? "gold" : d.generator.value_or("?");
    const std::string exp = d.experiment ? to_string(*d.experiment) : "gold";
    for (const auto* speaker : {&d.speaker_a, &d.speaker_b}) {
      const SpeakerProfile& p = profiles.profile(*speaker);
      const std::size_t cap = std::min<std::size_t>(p.biography.size(),
                                                    static_cast<std::size_t>(biography_cap));
      std::string bio;
      for (std::size_t i = 0; i < cap; ++i) bio += (i ? " " : "") + p.biography[i];
      std::string turns;
      for (const auto& t : d.turns) {
        if (t.speaker_ref == *speaker) turns += (turns.empty() ? "" : " ") + t.text;
      }
      const auto bio_tokens = text::alpha_tokens(bio);
      const auto turn_tokens = text::alpha_tokens(turns);
      const auto rw = rare_word_overlap(bio, turns, table, threshold);

      SpeakerOverlap e;
      e.dialogue_id = d.dialogue_id;
      e.profile_id = *speaker;
      e.is_target = speaker == &d.speaker_a;
      e.arm = arm;
      e.experiment = exp;
      e.rare_word_flag = rw.flag;
      e.rare_words_shared.assign(rw.shared.begin(), rw.shared.end());
      e.meteor = meteor_lite(turn_tokens, bio_tokens);
      e.bleu1 = bleu1(turn_tokens, bio_tokens);
      e.rouge1 = rouge1(turn_tokens, bio_tokens).f1;

      for (const auto& key : {std::make_pair(arm, exp), std::make_pair(arm, std::string("*"))}) {
        Acc& a = acc[key];
        a.entries += 1;
        a.meteor += e.meteor;
        a.bleu += e.bleu1;
        a.rouge += e.rouge1;
        if (e.is_target) {
          a.dialogues += 1;
          a.flagged += e.rare_word_flag ? 1 : 0;
        }
      }
      report.entries.push_back(std::move(e));
    }
  }
  for (const auto& [key, a] : acc) {
    OverlapAggregate g;
    g.arm = key.first;
    g.experiment = key.second;
    g.dialogues = a.dialogues;
    g.rare_word_pct = a.dialogues ? 100.0 * static_cast<double>(a.flagged) /
                                        static_cast<double>(a.dialogues)
                                  : 0.0;
    const double n = static_cast<double>(std::max<std::size_t>(a.entries, 1));
    g.meteor = a.meteor / n;
    g.bleu1 = a.bleu / n;
    g.rouge1 = a.rouge / n;
    report.aggregates.push_back(g);
  }
  return report;
}

std::string format_overlap_tables(const OverlapReport& report) {
  std::ostringstream os;
  os << "Rare-word overlap (target speaker, Zipf < " << fixed(report.threshold, 1) << ")\n";
  os << std::left << std::setw(14) << "arm" << std::setw(12) << "experiment" << std::right
     << std::setw(10) << "dialogues" << std::setw(12) << "% dialogues" << '\n';
  for (const auto& g : report.aggregates) {
    os << std::left << std::setw(14) << g.arm << std::setw(12) << g.experiment << std::right
       << std::setw(10) << g.dialogues << std::setw(11) << fixed(g.rare_word_pct, 2) << "%\n";
  }
  os << "\nBiography/turn overlap (means over speakers)\n";
  os << std::left << std::setw(14) << "arm" << std::setw(12) << "experiment" << std::right
     << std::setw(13) << "meteor_lite" << std::setw(9) << "BLEU-1" << std::setw(9) << "ROUGE-1"
     << '\n';
  for (const auto& g : report.aggregates) {
    os << std::left << std::setw(14) << g.arm << std::setw(12) << g.experiment << std::right
       << std::setw(13) << fixed(g.meteor) << std::setw(9) << fixed(g.bleu1) << std::setw(9)
       << fixed(g.rouge1) << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const OverlapReport& report) {
  auto entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"dialogue_id", e.dialogue_id}, {"profile_id", e.profile_id}, {"is_target", e.is_target},
                       {"arm", e.arm}, {"experiment", e.experiment}, {"rare_word_flag", e.rare_word_flag},
                       {"rare_words_shared", e.rare_words_shared}, {"meteor", e.meteor}, {"bleu1", e.bleu1},
                       {"rouge1", e.rouge1}});
  }
  auto aggregates = nlohmann::json::array();
  for (const auto& g : report.aggregates) {
    aggregates.push_back({{"arm", g.arm}, {"experiment", g.experiment}, {"dialogues", g.dialogues},
                          {"rare_word_pct", g.rare_word_pct}, {"meteor", g.meteor}, {"bleu1", g.bleu1},
                          {"rouge1", g.rouge1}});
  }
  return {{"threshold", report.threshold}, {"aggregates", aggregates}, {"entries", entries}};
}

}  // namespace ph
