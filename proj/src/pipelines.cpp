#include "qda/pipelines.hpp"

#include <algorithm>
#include <ctime>
#include <exception>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Planning

PipelineGraph plan(Method method) {
    PipelineGraph g;
    g.method = method;
    g.result_shape = result_shape(method);
    for (AgentRole r : role_sequence(method)) {
        g.stages.push_back(StageSpec{r, kDefaultRetryLimit, std::nullopt});
    }
    if (method == Method::Discourse) {
        // language and context interpretation run side by side
        g.stages[1].parallel_group = "interpretation";
        g.stages[2].parallel_group = "interpretation";
    }
    return g;
}

std::vector<std::string> check_graph(const PipelineGraph& g) {
    std::vector<std::string> problems;
    if (g.stages.size() != expected_stage_count(g.method)) {
        problems.push_back(std::string(to_string(g.method)) + " needs " +
                           std::to_string(expected_stage_count(g.method)) + " stages, graph has " +
                           std::to_string(g.stages.size()));
    }
    if (!g.stages.empty() && input_kind(g.stages.front().role) != PayloadKind::RawText) {
        problems.push_back("first stage must consume raw text");
    }
    for (std::size_t i = 0; i < g.stages.size(); ++i) {
        const auto& s = g.stages[i];
        if (s.retry_limit < 0 || s.retry_limit > kMaxRetryLimit) {
            problems.push_back("stage " + std::to_string(i) + " retry_limit out of range");
        }
        if (i == 0) {
            continue;
        }
        // members of a parallel group all read the output of the stage before the group
        std::size_t feeder = i - 1;
        while (s.parallel_group && feeder > 0 && g.stages[feeder].parallel_group == s.parallel_group) {
            --feeder;
        }
        if (output_kind(g.stages[feeder].role) != input_kind(s.role)) {
            problems.push_back("stage " + std::to_string(i) + " (" + std::string(to_string(s.role)) + ") expects " +
                               std::string(to_string(input_kind(s.role))) + " but receives " +
                               std::string(to_string(output_kind(g.stages[feeder].role))));
        }
    }
    if (g.method == Method::Discourse && g.stages.size() == 3 &&
        (!g.stages[1].parallel_group || g.stages[1].parallel_group != g.stages[2].parallel_group)) {
        problems.push_back("discourse stages 2 and 3 must share a parallel group");
    }
    return problems;
}

void validate(const PipelineConfig& config) {
    if (config.chunk_max_chars == 0) {
        throw Error(ErrorKind::InvalidArgument, "chunk_max_chars must be positive");
    }
    if (config.chunk_overlap_chars >= config.chunk_max_chars) {
        throw Error(ErrorKind::InvalidArgument, "chunk_overlap_chars must be below chunk_max_chars");
    }
    if (config.retry_limit && (*config.retry_limit < 0 || *config.retry_limit > kMaxRetryLimit)) {
        throw Error(ErrorKind::InvalidArgument,
                    "retry_limit must lie within 0.." + std::to_string(kMaxRetryLimit));
    }
    validate(config.backend);
}

void validate(const AnalysisRequest& request) {
    validate(request.config);
    if (request.custom_instruction && text::trim(*request.custom_instruction).empty()) {
        throw Error(ErrorKind::InvalidArgument, "custom instruction must not be blank");
    }
    if (request.document.segments.empty() || text::trim(request.document.text).empty()) {
        throw Error(ErrorKind::EmptyInput, "document has no text to analyze");
    }
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<Chunk> chunk(const Document& doc, const PipelineConfig& config) {
    const auto& segs = doc.segments;
    const std::size_t max = config.chunk_max_chars;
    const std::size_t want_overlap = config.chunk_overlap_chars;
    std::vector<Chunk> out;
    std::size_t next = 0;
    while (next < segs.size()) {
        Chunk c;
        c.first = next;
        if (!out.empty()) {
            const Chunk& prev = out.back();
            bool placed = false;
            if (want_overlap > 0) {
                std::size_t tail = prev.last + 1;
                std::size_t tail_chars = 0;
                while (tail > prev.first && tail_chars < want_overlap) {
                    --tail;
                    tail_chars += segs[tail].text.size();
                }
                if (tail_chars >= want_overlap && tail_chars + segs[next].text.size() <= max) {
                    c.first = tail;
                    c.overlap = next - tail;
                    c.chars = tail_chars;
                    placed = true;
                }
            }
            c.no_overlap = want_overlap > 0 && !placed;
        }
        std::size_t i = next;
        if (c.overlap == 0 && segs[i].text.size() > max) {
            c.oversize = true;
            c.chars = segs[i].text.size();
            ++i;
        } else {
            while (i < segs.size() && c.chars + segs[i].text.size() <= max) {
                c.chars += segs[i].text.size();
                ++i;
            }
        }
        c.last = i - 1;
        next = i;
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Events

std::string_view to_string(StageStatus s) noexcept {
    switch (s) {
        case StageStatus::Started: return "started";
        case StageStatus::Retrying: return "retrying";
        case StageStatus::Done: return "done";
        case StageStatus::Failed: return "failed";
    }
    return "failed";
}

std::optional<StageStatus> parse_stage_status(std::string_view s) noexcept {
    for (StageStatus st : {StageStatus::Started, StageStatus::Retrying, StageStatus::Done, StageStatus::Failed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

void to_json(json& j, const StageEvent& e) {
    j = json{{"stage_index", e.stage_index},
             {"role", std::string(to_string(e.role))},
             {"status", std::string(to_string(e.status))},
             {"attempt", e.attempt}};
    if (!e.message.empty()) {
        j["message"] = e.message;
    }
}

void from_json(const json& j, StageEvent& e) {
    e.stage_index = j.at("stage_index").get<int>();
    const auto role = parse_role(j.at("role").get<std::string>());
    const auto status = parse_stage_status(j.at("status").get<std::string>());
    if (!role || !status) {
        throw Error(ErrorKind::ContractViolation, "malformed stage event");
    }
    e.role = *role;
    e.status = *status;
    e.attempt = j.value("attempt", 0);
    e.message = j.value("message", std::string());
}

std::string to_ndjson(const StageEvent& e) {
    return json(e).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

void EventLog::push(StageEvent e) {
    {
        std::lock_guard lock(mu_);
        if (closed_) {
            return;
        }
        events_.push_back(std::move(e));
    }
    cv_.notify_all();
}

void EventLog::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventLog::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::vector<StageEvent> EventLog::snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::vector<StageEvent> EventLog::wait_after(std::size_t seen, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > seen; });
    if (events_.size() <= seen) {
        return {};
    }
    return {events_.begin() + static_cast<std::ptrdiff_t>(seen), events_.end()};
}

// ---------------------------------------------------------------------------
// Merging

namespace {

template <class T>
void dedupe_sources(std::vector<T>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    v.erase(std::unique(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.id == b.id; }), v.end());
}

void dedupe_ints(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::string label_key(std::string_view label) {
    return text::ascii_lower(text::trim(label));
}

}  // namespace

StagePayload merge_payloads(const std::vector<StagePayload>& parts) {
    if (parts.empty()) {
        throw Error(ErrorKind::InvalidArgument, "nothing to merge");
    }
    const PayloadKind kind = kind_of(parts.front());
    for (const auto& p : parts) {
        if (kind_of(p) != kind) {
            throw Error(ErrorKind::PayloadKindMismatch, "cannot merge payloads of different kinds");
        }
    }
    switch (kind) {
        case PayloadKind::SummaryText: {
            payload::SummaryText out;
            std::vector<std::string> summaries;
            for (const auto& p : parts) {
                const auto& s = std::get<payload::SummaryText>(p);
                const std::string body(text::trim(s.summary));
                if (std::find(summaries.begin(), summaries.end(), body) == summaries.end()) {
                    summaries.push_back(body);
                }
                out.sources.insert(out.sources.end(), s.sources.begin(), s.sources.end());
                out.cited_segments.insert(out.cited_segments.end(), s.cited_segments.begin(), s.cited_segments.end());
            }
            out.summary = text::join(summaries, "\n\n");
            dedupe_sources(out.sources);
            dedupe_ints(out.cited_segments);
            return out;
        }
        case PayloadKind::CodeSet: {
            payload::CodeSet out;
            std::unordered_set<std::string> seen;
            for (const auto& p : parts) {
                const auto& s = std::get<payload::CodeSet>(p);
                for (const auto& c : s.codes) {
                    if (seen.insert(label_key(c.label)).second) {
                        out.codes.push_back(c);
                    }
                }
                out.sources.insert(out.sources.end(), s.sources.begin(), s.sources.end());
            }
            dedupe_sources(out.sources);
            return out;
        }
        case PayloadKind::PatternSet: {
            payload::PatternSet out;
            std::unordered_set<std::string> seen;
            for (const auto& p : parts) {
                const auto& s = std::get<payload::PatternSet>(p);
                for (const auto& pt : s.patterns) {
                    if (seen.insert(label_key(pt.statement)).second) {
                        out.patterns.push_back(pt);
                    }
                }
                out.sources.insert(out.sources.end(), s.sources.begin(), s.sources.end());
            }
            dedupe_sources(out.sources);
            return out;
        }
        default:
            if (parts.size() == 1) {
                return parts.front();
            }
            throw Error(ErrorKind::InvalidArgument,
                        std::string(to_string(kind)) + " is not produced by a first stage and cannot be merged");
    }
}

// ---------------------------------------------------------------------------
// Execution

namespace {

[[noreturn]] void reject(const std::string& raw, const std::string& msg) {
    throw AgentOutputError(ErrorKind::SchemaViolation, msg, raw);
}

std::string iso_utc(std::chrono::system_clock::time_point tp) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

std::string logical_time(int second) {
    return iso_utc(std::chrono::system_clock::time_point(std::chrono::seconds(second)));
}

template <class T>
std::optional<std::string> resolve(std::string_view ref, const std::vector<T>& items) {
    const std::string_view r = text::trim(ref);
    for (const auto& it : items) {
        if (it.id == r) return it.id;
    }
    for (const auto& it : items) {
        if (text::iequals(text::trim(it.label), r)) return it.id;
    }
    return std::nullopt;
}

/// Resolves member references of each group against `items`, keeps the first
/// occurrence of a member across groups and drops groups left empty.
template <class G, class T>
void resolve_groups(std::vector<G>& groups, std::vector<std::string> G::*members, const std::vector<T>& items,
                    std::string_view group_kind, std::string_view item_kind, bool exclusive, bool require_all,
                    const std::string& raw) {
    std::unordered_set<std::string> assigned;
    std::vector<G> kept;
    for (G& g : groups) {
        std::vector<std::string> resolved;
        std::unordered_set<std::string> local;
        for (const auto& ref : g.*members) {
            auto id = resolve(ref, items);
            if (!id) {
                reject(raw, std::string(group_kind) + " '" + g.label + "' references unknown " +
                                std::string(item_kind) + " '" + ref + "'");
            }
            if (!local.insert(*id).second) {
                continue;
            }
            if (exclusive && !assigned.insert(*id).second) {
                continue;
            }
            assigned.insert(*id);
            resolved.push_back(*id);
        }
        if (!resolved.empty()) {
            g.*members = std::move(resolved);
            kept.push_back(std::move(g));
        }
    }
    groups = std::move(kept);
    if (require_all) {
        std::vector<std::string> missing;
        for (const auto& it : items) {
            if (!assigned.contains(it.id)) missing.push_back(it.id);
        }
        if (!missing.empty()) {
            reject(raw, std::string(item_kind) + "s not assigned to any " + std::string(group_kind) + ": " +
                            text::join(missing, ", "));
        }
    }
    if (!items.empty() && groups.empty()) {
        reject(raw, "no " + std::string(group_kind) + " was produced for the given " + std::string(item_kind) + "s");
    }
}

template <class T>
std::map<std::string, std::string> renumber(std::vector<T>& items, std::string_view prefix) {
    std::map<std::string, std::string> mapping;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string fresh = std::string(prefix) + "-" + std::to_string(i + 1);
        mapping[items[i].id] = fresh;
        items[i].id = fresh;
    }
    return mapping;
}

void remap(std::vector<std::string>& refs, const std::map<std::string, std::string>& mapping) {
    for (auto& r : refs) {
        if (auto it = mapping.find(r); it != mapping.end()) r = it->second;
    }
}

void check_segments(const std::vector<int>& ids, const std::set<int>& allowed, const std::string& owner,
                    const std::string& raw) {
    for (int s : ids) {
        if (!allowed.contains(s)) {
            reject(raw, owner + " cites segment " + std::to_string(s) + " which was not provided");
        }
    }
}

void require_text(const std::string& s, const std::string& what, const std::string& raw) {
    if (text::trim(s).empty()) {
        reject(raw, what + " must not be blank");
    }
}

/// Artifacts accumulated across stages.
struct RunState {
    const Document* doc = nullptr;
    std::size_t source_budget = 0;

    std::optional<std::string> summary;
    std::vector<int> cited;
    std::vector<Code> codes;
    std::vector<SubCategory> subcats;
    std::vector<Category> cats;
    std::vector<Theme> themes;
    std::vector<Pattern> patterns;
    std::optional<CoreConcept> core;
    std::optional<std::string> language_analysis;
    std::optional<std::string> broader_context;

    /// Segments referenced by current artifacts, then others in document
    /// order while they fit the budget.
    std::vector<SourceSegment> sources() const {
        std::set<int> required(cited.begin(), cited.end());
        for (const auto& c : codes) required.insert(c.supporting_segments.begin(), c.supporting_segments.end());
        for (const auto& p : patterns) required.insert(p.evidence.begin(), p.evidence.end());
        std::size_t used = 0;
        for (int id : required) {
            if (const Segment* s = doc->find_segment(id)) used += s->text.size();
        }
        std::vector<SourceSegment> out;
        for (const auto& s : doc->segments) {
            if (required.contains(s.id)) {
                out.push_back({s.id, s.text});
            } else if (used + s.text.size() <= source_budget) {
                used += s.text.size();
                out.push_back({s.id, s.text});
            }
        }
        return out;
    }

    StagePayload input_for(PayloadKind kind) const {
        switch (kind) {
            case PayloadKind::SummaryText: return payload::SummaryText{summary.value_or(""), sources(), cited};
            case PayloadKind::CodeSet: return payload::CodeSet{codes, sources()};
            case PayloadKind::GroupedCodes: return payload::GroupedCodes{subcats, codes, sources()};
            case PayloadKind::CategorySet: return payload::CategorySet{cats, subcats, codes, sources()};
            case PayloadKind::ThemeSet: return payload::ThemeSet{themes, cats, patterns, sources()};
            case PayloadKind::PatternSet: return payload::PatternSet{patterns, cats, themes, codes, sources()};
            default: break;
        }
        throw Error(ErrorKind::PayloadKindMismatch, std::string(to_string(kind)) + " is not a mid-pipeline payload");
    }
};

std::set<int> ids_of(const std::vector<SourceSegment>& sources) {
    std::set<int> out;
    for (const auto& s : sources) out.insert(s.id);
    return out;
}

std::vector<Code> clean_codes(std::vector<Code> codes, const std::set<int>& allowed, const std::string& raw) {
    std::vector<Code> out;
    std::unordered_set<std::string> seen;
    for (auto& c : codes) {
        check_segments(c.supporting_segments, allowed, "code '" + c.label + "'", raw);
        if (seen.insert(label_key(c.label)).second) {
            c.label = std::string(text::trim(c.label));
            out.push_back(std::move(c));
        }
    }
    renumber(out, "code");
    return out;
}

std::vector<Pattern> clean_patterns(std::vector<Pattern> ps, const std::set<int>& allowed, const std::string& raw) {
    std::vector<Pattern> out;
    std::unordered_set<std::string> seen;
    for (auto& p : ps) {
        require_text(p.statement, "pattern statement", raw);
        check_segments(p.evidence, allowed, "pattern", raw);
        if (seen.insert(label_key(p.statement)).second) out.push_back(std::move(p));
    }
    renumber(out, "pattern");
    return out;
}

/// Checks a parsed stage output against the run state and folds it in.
/// Throws AgentOutputError(SchemaViolation) so the stage is retried.
void apply(AgentRole role, StagePayload out, const std::set<int>& allowed, const std::string& raw, RunState& st) {
    switch (role) {
        case AgentRole::Analyzer:
        case AgentRole::Summarizer: {
            auto& p = std::get<payload::SummaryText>(out);
            require_text(p.summary, "summary", raw);
            check_segments(p.cited_segments, allowed, "summary", raw);
            st.summary = std::string(text::trim(p.summary));
            st.cited = p.cited_segments;
            return;
        }
        case AgentRole::Coder:
        case AgentRole::GroundedCoder:
        case AgentRole::CodeReviewer: {
            auto& p = std::get<payload::CodeSet>(out);
            st.codes = clean_codes(std::move(p.codes), allowed, raw);
            return;
        }
        case AgentRole::SubCategorizer: {
            auto& p = std::get<payload::GroupedCodes>(out);
            resolve_groups(p.subcategories, &SubCategory::member_codes, st.codes, "subcategory", "code", true, true,
                           raw);
            renumber(p.subcategories, "subcat");
            st.subcats = std::move(p.subcategories);
            return;
        }
        case AgentRole::Categorizer: {
            auto& p = std::get<payload::CategorySet>(out);
            resolve_groups(p.categories, &Category::members, st.subcats, "category", "subcategory", true, true, raw);
            renumber(p.categories, "cat");
            st.cats = std::move(p.categories);
            return;
        }
        case AgentRole::GroundedCategorizer: {
            auto& p = std::get<payload::CategorySet>(out);
            resolve_groups(p.categories, &Category::members, st.codes, "category", "code", true, true, raw);
            renumber(p.categories, "cat");
            st.cats = std::move(p.categories);
            return;
        }
        case AgentRole::ThemeSynthesizer:
        case AgentRole::GroundedThemeAgent: {
            auto& p = std::get<payload::ThemeSet>(out);
            for (const auto& t : p.themes) require_text(t.label, "theme label", raw);
            resolve_groups(p.themes, &Theme::member_categories, st.cats, "theme", "category", false, false, raw);
            renumber(p.themes, "theme");
            st.themes = std::move(p.themes);
            return;
        }
        case AgentRole::PatternExtractor: {
            auto& p = std::get<payload::PatternSet>(out);
            resolve_groups(p.categories, &Category::members, st.codes, "category", "code", true, true, raw);
            resolve_groups(p.themes, &Theme::member_categories, p.categories, "theme", "category", false, false, raw);
            const auto cat_ids = renumber(p.categories, "cat");
            for (auto& t : p.themes) remap(t.member_categories, cat_ids);
            renumber(p.themes, "theme");
            auto patterns = clean_patterns(std::move(p.patterns), allowed, raw);
            if (!st.codes.empty() && patterns.empty()) {
                reject(raw, "no patterns were produced for the given codes");
            }
            st.cats = std::move(p.categories);
            st.themes = std::move(p.themes);
            st.patterns = std::move(patterns);
            return;
        }
        case AgentRole::KeyPatternIdentifier: {
            st.patterns = clean_patterns(std::move(std::get<payload::PatternSet>(out).patterns), allowed, raw);
            return;
        }
        case AgentRole::GroundedPatternAgent: {
            auto patterns = clean_patterns(std::move(std::get<payload::PatternSet>(out).patterns), allowed, raw);
            if (!st.cats.empty() && patterns.empty()) {
                reject(raw, "no patterns were produced for the given categories");
            }
            st.patterns = std::move(patterns);
            return;
        }
        case AgentRole::LanguageAnalyzer: {
            auto& p = std::get<payload::DiscourseSection>(out);
            require_text(p.analysis, "language analysis", raw);
            st.language_analysis = std::string(text::trim(p.analysis));
            return;
        }
        case AgentRole::ContextInterpreter: {
            auto& p = std::get<payload::DiscourseSection>(out);
            require_text(p.analysis, "context interpretation", raw);
            st.broader_context = std::string(text::trim(p.analysis));
            return;
        }
        case AgentRole::CoreCoder: {
            auto& p = std::get<payload::CoreConceptPayload>(out);
            if (!p.core) {
                if (!st.cats.empty()) reject(raw, "core concept is required when categories exist");
                st.core.reset();
                return;
            }
            require_text(p.core->label, "core concept label", raw);
            std::vector<std::string> linked;
            for (const auto& ref : p.core->linked_categories) {
                auto id = resolve(ref, st.cats);
                if (!id) reject(raw, "core concept references unknown category '" + ref + "'");
                if (std::find(linked.begin(), linked.end(), *id) == linked.end()) linked.push_back(*id);
            }
            if (linked.empty()) reject(raw, "core concept links no categories");
            p.core->linked_categories = std::move(linked);
            st.core = std::move(p.core);
            return;
        }
    }
    throw Error(ErrorKind::UnknownRole, "no assembly rule for role");
}

std::string corrective_suffix(const std::string& error) {
    return "\n\nYour previous reply was rejected: " + error +
           "\nReply again with exactly one fenced JSON block that satisfies the schema and cites only the "
           "segment ids shown above.";
}

struct Attempted {
    StagePayload payload;
    std::string raw;
    int attempts = 0;
    Usage usage;
};

class Executor {
public:
    Executor(const AnalysisRequest& req, const RunOptions& opt, std::shared_ptr<Backend> backend)
        : req_(req), opt_(opt), backend_(std::move(backend)) {}

    AnalysisResult execute() {
        const PipelineGraph graph = plan(req_.method);
        RunState st;
        st.doc = &req_.document;
        st.source_budget = req_.config.chunk_max_chars;
        std::vector<StageRecord> trace(graph.stages.size());
        const bool logical = backend_->kind() == BackendKind::Mock;

        std::size_t i = 0;
        while (i < graph.stages.size()) {
            std::size_t end = i + 1;
            while (graph.stages[i].parallel_group && end < graph.stages.size() &&
                   graph.stages[end].parallel_group == graph.stages[i].parallel_group) {
                ++end;
            }
            if (i == 0) {
                run_first(graph.stages[0], st, trace[0], logical);
            } else if (end - i == 1) {
                run_single(static_cast<int>(i), graph.stages[i], st, trace[i], logical);
            } else {
                run_group(graph, i, end, st, trace, logical);
            }
            i = end;
        }
        return assemble(st, std::move(trace));
    }

private:
    int retry_limit(const StageSpec& s) const { return req_.config.retry_limit.value_or(s.retry_limit); }

    void emit(int stage, AgentRole role, StageStatus status, int attempt, std::string msg = {}) {
        StageEvent e{stage, role, status, attempt, std::move(msg)};
        std::lock_guard lock(emit_mu_);
        if (opt_.events) opt_.events->push(e);
        if (opt_.on_event) opt_.on_event(e);
    }

    /// One role invocation with corrective retries; `accept` folds the
    /// parsed payload into a scratch state and may reject it.
    template <class Accept>
    Attempted invoke(int stage, const StageSpec& spec, const StagePayload& input, Accept accept) {
        const RenderedPrompt prompt = render_prompt(spec.role, input, req_.custom_instruction, req_.method);
        const int limit = retry_limit(spec);
        std::string last_error;
        Attempted result{payload::RawText{}, {}, 0, {}};
        for (int attempt = 1; attempt <= limit + 1; ++attempt) {
            if (attempt > 1) {
                emit(stage, spec.role, StageStatus::Retrying, attempt, last_error);
            }
            CompletionRequest creq;
            creq.role = spec.role;
            creq.system_instruction = prompt.system_instruction;
            creq.user_content = prompt.user_content + (attempt > 1 ? corrective_suffix(last_error) : std::string());
            CompletionResponse resp = backend_->complete(creq);
            result.attempts = attempt;
            result.usage.input_chars += resp.usage.input_chars;
            result.usage.output_chars += resp.usage.output_chars;
            try {
                StagePayload parsed = parse_agent_output(spec.role, resp.text);
                accept(parsed, resp.text);
                result.payload = std::move(parsed);
                result.raw = std::move(resp.text);
                return result;
            } catch (const AgentOutputError& e) {
                last_error = e.what();
                if (resp.finish_reason == FinishReason::Truncated) {
                    last_error += " (the reply was truncated; keep it shorter)";
                }
            }
        }
        throw StageFailedError(std::string(to_string(spec.role)), stage, limit + 1, last_error);
    }

    void stamp(StageRecord& rec, int stage, AgentRole role, bool logical,
               std::chrono::system_clock::time_point started, const Usage& usage, int attempts) {
        rec.stage_index = stage;
        rec.role = std::string(to_string(role));
        rec.attempts = attempts;
        rec.input_chars = usage.input_chars;
        rec.output_chars = usage.output_chars;
        if (logical) {
            rec.started_at = logical_time(2 * stage);
            rec.finished_at = logical_time(2 * stage + 1);
        } else {
            rec.started_at = iso_utc(started);
            rec.finished_at = iso_utc(std::chrono::system_clock::now());
        }
    }

    template <class F>
    void guarded(int stage, AgentRole role, F body) {
        try {
            body();
        } catch (const StageFailedError& e) {
            emit(stage, role, StageStatus::Failed, e.attempts(), e.last_error());
            throw;
        } catch (const std::exception& e) {
            emit(stage, role, StageStatus::Failed, 0, e.what());
            throw;
        }
    }

    void run_first(const StageSpec& spec, RunState& st, StageRecord& rec, bool logical) {
        const auto started = std::chrono::system_clock::now();
        emit(0, spec.role, StageStatus::Started, 1);
        guarded(0, spec.role, [&] {
            const auto chunks = chunk(req_.document, req_.config);
            std::vector<StagePayload> parts;
            Usage usage;
            int attempts = 0;
            for (const Chunk& c : chunks) {
                payload::RawText input;
                for (std::size_t k = c.first; k <= c.last; ++k) {
                    const Segment& s = req_.document.segments[k];
                    input.segments.push_back({s.id, s.text});
                }
                const std::set<int> allowed = ids_of(input.segments);
                Attempted a = invoke(0, spec, input, [&](StagePayload& p, const std::string& raw) {
                    RunState scratch;
                    scratch.doc = &req_.document;
                    apply(spec.role, p, allowed, raw, scratch);
                });
                attempts += a.attempts;
                usage.input_chars += a.usage.input_chars;
                usage.output_chars += a.usage.output_chars;
                std::visit(
                    [&](auto& v) {
                        using T = std::decay_t<decltype(v)>;
                        if constexpr (requires { v.sources; }) {
                            v.sources = input.segments;
                        }
                        if constexpr (std::is_same_v<T, payload::SummaryText>) {
                            if (v.cited_segments.empty()) v.cited_segments.assign(allowed.begin(), allowed.end());
                        }
                    },
                    a.payload);
                parts.push_back(std::move(a.payload));
            }
            const StagePayload merged = merge_payloads(parts);
            std::set<int> all;
            for (const auto& s : req_.document.segments) all.insert(s.id);
            apply(spec.role, merged, all, "", st);
            stamp(rec, 0, spec.role, logical, started, usage, attempts);
        });
        emit(0, spec.role, StageStatus::Done, rec.attempts);
    }

    void run_single(int stage, const StageSpec& spec, RunState& st, StageRecord& rec, bool logical) {
        const auto started = std::chrono::system_clock::now();
        emit(stage, spec.role, StageStatus::Started, 1);
        guarded(stage, spec.role, [&] {
            const StagePayload input = st.input_for(input_kind(spec.role));
            const std::set<int> allowed = ids_of(std::visit(
                [](const auto& v) -> std::vector<SourceSegment> {
                    if constexpr (requires { v.sources; }) {
                        return v.sources;
                    } else {
                        return {};
                    }
                },
                input));
            RunState next;
            Attempted a = invoke(stage, spec, input, [&](StagePayload& p, const std::string& raw) {
                RunState scratch = st;
                apply(spec.role, p, allowed, raw, scratch);
                next = std::move(scratch);
            });
            st = std::move(next);
            stamp(rec, stage, spec.role, logical, started, a.usage, a.attempts);
        });
        emit(stage, spec.role, StageStatus::Done, rec.attempts);
    }

    /// Members read the same input, run concurrently and are folded in stage order.
    void run_group(const PipelineGraph& g, std::size_t begin, std::size_t end, RunState& st,
                   std::vector<StageRecord>& trace, bool logical) {
        std::vector<RunState> outs(end - begin, st);
        std::vector<std::future<void>> futures;
        for (std::size_t k = begin; k < end; ++k) {
            futures.push_back(std::async(std::launch::async, [&, k] {
                RunState& local = outs[k - begin];
                run_single(static_cast<int>(k), g.stages[k], local, trace[k], logical);
            }));
        }
        std::exception_ptr first_error;
        for (auto& f : futures) {
            try {
                f.get();
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) {
            std::rethrow_exception(first_error);
        }
        for (auto& o : outs) {
            if (o.language_analysis) st.language_analysis = o.language_analysis;
            if (o.broader_context) st.broader_context = o.broader_context;
        }
    }

    AnalysisResult assemble(RunState& st, std::vector<StageRecord> trace) {
        const Method m = req_.method;
        AnalysisResult r;
        r.method = m;
        r.doc_id = req_.document.doc_id;
        if (shape_has(m, Tier::Summary)) r.summary = st.summary;
        if (shape_has(m, Tier::Codes)) r.codes = std::move(st.codes);
        if (shape_has(m, Tier::Subcategories)) r.subcategories = std::move(st.subcats);
        if (shape_has(m, Tier::Categories)) r.categories = std::move(st.cats);
        if (shape_has(m, Tier::Themes)) r.themes = std::move(st.themes);
        if (shape_has(m, Tier::CoreConcept)) r.core_concept = std::move(st.core);
        if (shape_has(m, Tier::DiscourseSections)) {
            r.discourse_sections = DiscourseSections{std::move(st.patterns), st.language_analysis.value_or(""),
                                                     st.broader_context.value_or("")};
        } else if (shape_has(m, Tier::Patterns)) {
            r.patterns = std::move(st.patterns);
        }
        r.stage_trace = std::move(trace);
        const ValidationReport report = validate_result(r, req_.document);
        if (!report.ok) {
            std::vector<std::string> msgs;
            for (const auto& v : report.violations) msgs.push_back(v.message);
            throw Error(ErrorKind::ContractViolation, "assembled result is invalid: " + text::join(msgs, "; "));
        }
        return r;
    }

    const AnalysisRequest& req_;
    const RunOptions& opt_;
    std::shared_ptr<Backend> backend_;
    std::mutex emit_mu_;
};

}  // namespace

AnalysisResult run(const AnalysisRequest& request, const RunOptions& options) {
    struct CloseLog {
        const std::shared_ptr<EventLog>& log;
        ~CloseLog() {
            if (log) log->close();
        }
    } closer{options.events};
    validate(request);
    std::shared_ptr<Backend> backend = options.backend;
    if (!backend) {
        backend = make_backend(request.config.backend, options.transport);
    }
    Executor ex(request, options, std::move(backend));
    return ex.execute();
}

std::shared_ptr<PipelineRun> PipelineRun::start(AnalysisRequest request, RunOptions options) {
    auto handle = std::shared_ptr<PipelineRun>(new PipelineRun());
    if (!options.events) {
        options.events = std::make_shared<EventLog>();
    }
    handle->events_ = options.events;
    handle->result_ = std::async(std::launch::async, [request = std::move(request), options = std::move(options)] {
                          return run(request, options);
                      }).share();
    return handle;
}

AnalysisResult PipelineRun::wait() {
    return result_.get();
}

}  // namespace qda
