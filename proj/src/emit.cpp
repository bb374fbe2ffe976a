#include "qda/emit.hpp"

#include <algorithm>
#include <charconv>

#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

namespace {

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join_ints(const std::vector<int>& v, std::string_view sep, std::string_view prefix = "") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += prefix;
        out += std::to_string(v[i]);
    }
    return out;
}

/// Numeric suffix of ids such as code-12, for natural ordering.
long id_number(const std::string& id) {
    const auto dash = id.rfind('-');
    long n = 0;
    if (dash == std::string::npos) return 0;
    std::from_chars(id.data() + dash + 1, id.data() + id.size(), n);
    return n;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<const Code*> codes_in_order(const AnalysisResult& r) {
    std::vector<const Code*> out;
    for (const auto& c : r.codes) out.push_back(&c);
    std::stable_sort(out.begin(), out.end(), [](const Code* a, const Code* b) {
        const long x = id_number(a->id), y = id_number(b->id);
        return x != y ? x < y : a->id < b->id;
    });
    return out;
}

CsvRow row_for(const AnalysisResult& r, const Code& code) {
    CsvRow row{code.label, "", "", "", code.supporting_segments, code.supporting_excerpt};
    const SubCategory* sub = nullptr;
    for (const auto& s : r.subcategories) {
        if (contains(s.member_codes, code.id)) {
            sub = &s;
            break;
        }
    }
    if (sub) row.subcategory = sub->label;
    const Category* cat = nullptr;
    for (const auto& c : r.categories) {
        if (contains(c.members, code.id) || (sub && contains(c.members, sub->id))) {
            cat = &c;
            break;
        }
    }
    if (!cat) return row;
    row.category = cat->label;
    std::vector<std::string> themes;
    for (const auto& t : r.themes) {
        if (contains(t.member_categories, cat->id)) themes.push_back(t.label);
    }
    row.theme = text::join(themes, "; ");
    return row;
}

// -- markdown ---------------------------------------------------------------

std::string md_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '\\' || c == '`' || c == '*' || c == '_' || c == '[' || c == ']' || c == '<' || c == '>' ||
            c == '|') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    return out;
}

std::string md_inline(std::string_view s) {
    return md_escape(text::collapse_whitespace(s));
}

/// Block text keeps its paragraph breaks.
std::string md_block(std::string_view s) {
    std::vector<std::string> paras;
    std::size_t start = 0;
    const std::string norm = text::normalize(s);
    while (start <= norm.size()) {
        const auto stop = norm.find("\n\n", start);
        const std::size_t end = stop == std::string::npos ? norm.size() : stop;
        std::string p = md_inline(std::string_view(norm).substr(start, end - start));
        if (!p.empty()) {
            // a leading marker would otherwise turn the paragraph into a heading or list
            if (p[0] == '#' || p[0] == '-' || p[0] == '+' || p[0] == '=') p.insert(0, "\\");
            paras.push_back(std::move(p));
        }
        if (stop == std::string::npos) break;
        start = stop + 2;
    }
    return text::join(paras, "\n\n");
}

std::string cite(const std::vector<int>& segs) {
    if (segs.empty()) return "";
    return " (segments " + join_ints(segs, ", ", "S") + ")";
}

std::string labels_of(const std::vector<std::string>& ids, const AnalysisResult& r) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        std::string label = id;
        for (const auto& c : r.codes)
            if (c.id == id) label = c.label;
        for (const auto& s : r.subcategories)
            if (s.id == id) label = s.label;
        for (const auto& c : r.categories)
            if (c.id == id) label = c.label;
        out.push_back(md_inline(label));
    }
    return text::join(out, ", ");
}

void pattern_list(std::string& md, const std::vector<Pattern>& patterns) {
    if (patterns.empty()) {
        md += "None identified.\n";
        return;
    }
    for (const auto& p : patterns) md += "- " + md_inline(p.statement) + cite(p.evidence) + "\n";
}

void section(std::string& md, std::string_view heading) {
    md += "\n## ";
    md += heading;
    md += "\n\n";
}

}  // namespace

std::string to_csv(const AnalysisResult& result) {
    std::string out(kCsvHeader);
    out.push_back('\n');
    for (const Code* c : codes_in_order(result)) {
        const CsvRow row = row_for(result, *c);
        out += csv_field(row.code) + ',' + csv_field(row.subcategory) + ',' + csv_field(row.category) + ',' +
               csv_field(row.theme) + ',' + csv_field(join_ints(row.supporting_segments, ";")) + ',' +
               csv_field(row.excerpt) + '\n';
    }
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view s) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    std::size_t i = 0;
    bool any = false;  // current row has content
    while (i < s.size()) {
        const char c = s[i];
        if (c == '"' && field.empty()) {
            ++i;
            bool closed = false;
            while (i < s.size()) {
                if (s[i] == '"') {
                    if (i + 1 < s.size() && s[i + 1] == '"') {
                        field.push_back('"');
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                field.push_back(s[i++]);
            }
            if (!closed) throw Error(ErrorKind::DecodeError, "unterminated quoted CSV field");
            if (i < s.size() && s[i] != ',' && s[i] != '\n' && s[i] != '\r') {
                throw Error(ErrorKind::DecodeError, "unexpected character after closing quote");
            }
            any = true;
            continue;
        }
        if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
            ++i;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
            ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c == '"') {
            throw Error(ErrorKind::DecodeError, "quote inside an unquoted CSV field");
        } else {
            field.push_back(c);
            any = true;
            ++i;
        }
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<CsvRow> read_csv(std::string_view bytes) {
    const auto rows = parse_csv(bytes);
    if (rows.empty() || text::join(rows[0], ",") != kCsvHeader) {
        throw Error(ErrorKind::DecodeError, "CSV header does not match the analysis export format");
    }
    std::vector<CsvRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 6) {
            throw Error(ErrorKind::DecodeError, "CSV row " + std::to_string(i) + " has " + std::to_string(r.size()) +
                                                    " fields, expected 6");
        }
        CsvRow row{r[0], r[1], r[2], r[3], {}, r[5]};
        if (!r[4].empty()) {
            for (const auto& part : text::split(r[4], ';')) {
                int v = 0;
                const auto t = text::trim(part);
                const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
                if (ec != std::errc{} || p != t.data() + t.size()) {
                    throw Error(ErrorKind::DecodeError, "bad segment id '" + std::string(part) + "' in CSV row " +
                                                            std::to_string(i));
                }
                row.supporting_segments.push_back(v);
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::string to_report(const AnalysisResult& r, const Document* doc) {
    std::string md = "# " + std::string(display_name(r.method)) + " Report\n\n";
    md += "- Method: " + std::string(to_string(r.method)) + "\n";
    md += "- Document: " + r.doc_id + "\n";
    if (doc) {
        for (const char* key : {"title", "origin", "filename"}) {
            auto it = doc->metadata.find(key);
            if (it != doc->metadata.end() && !it->second.empty()) {
                std::string name = key;
                name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
                md += "- " + name + ": " + md_inline(it->second) + "\n";
            }
        }
        md += "- Source: " + std::string(modality_name(doc->source)) + "\n";
        md += "- Segments: " + std::to_string(doc->segments.size()) + "\n";
    }
    if (!r.stage_trace.empty()) {
        std::vector<std::string> roles;
        for (const auto& s : r.stage_trace) roles.push_back(s.role);
        md += "- Stages: " + text::join(roles, ", ") + "\n";
    }

    for (Tier tier : result_shape(r.method)) {
        switch (tier) {
            case Tier::Summary:
                section(md, "Summary");
                md += (r.summary && !text::trim(*r.summary).empty() ? md_block(*r.summary) : "No summary produced.") +
                      std::string("\n");
                break;
            case Tier::Codes:
                section(md, "Codes");
                if (r.codes.empty()) md += "No codes identified.\n";
                for (const Code* c : codes_in_order(r)) {
                    md += "- **" + md_inline(c->label) + "** (" + c->id + ")" + cite(c->supporting_segments);
                    if (!text::trim(c->description).empty()) md += ": " + md_inline(c->description);
                    md += "\n";
                    if (!text::trim(c->supporting_excerpt).empty()) {
                        md += "  > " + md_inline(c->supporting_excerpt) + "\n";
                    }
                }
                break;
            case Tier::Subcategories:
                section(md, "Subcategories");
                if (r.subcategories.empty()) md += "None identified.\n";
                for (const auto& s : r.subcategories) {
                    md += "- **" + md_inline(s.label) + "** (" + s.id + "): " + labels_of(s.member_codes, r) + "\n";
                }
                break;
            case Tier::Categories:
                section(md, "Categories");
                if (r.categories.empty()) md += "None identified.\n";
                for (const auto& c : r.categories) {
                    md += "- **" + md_inline(c.label) + "** (" + c.id + "): " + labels_of(c.members, r) + "\n";
                }
                break;
            case Tier::Themes:
                section(md, "Themes");
                if (r.themes.empty()) md += "None identified.\n";
                for (std::size_t i = 0; i < r.themes.size(); ++i) {
                    const auto& t = r.themes[i];
                    if (i) md += "\n";
                    md += "### " + md_inline(t.label) + " (" + t.id + ")\n\n";
                    if (!text::trim(t.narrative).empty()) md += md_block(t.narrative) + "\n\n";
                    md += "Categories: " + labels_of(t.member_categories, r) + "\n";
                }
                break;
            case Tier::Patterns:
                section(md, "Patterns");
                pattern_list(md, r.patterns);
                break;
            case Tier::CoreConcept:
                section(md, "Core Concept");
                if (!r.core_concept) {
                    md += "No core concept identified.\n";
                    break;
                }
                md += "**" + md_inline(r.core_concept->label) + "**\n\n";
                if (!text::trim(r.core_concept->theory_narrative).empty()) {
                    md += md_block(r.core_concept->theory_narrative) + "\n\n";
                }
                md += "Linked categories: " + labels_of(r.core_concept->linked_categories, r) + "\n";
                break;
            case Tier::DiscourseSections: {
                const DiscourseSections empty;
                const DiscourseSections& d = r.discourse_sections ? *r.discourse_sections : empty;
                section(md, "Key Patterns");
                pattern_list(md, d.key_patterns);
                section(md, "Language Analysis");
                md += (text::trim(d.language_analysis).empty() ? "Not provided." : md_block(d.language_analysis)) +
                      std::string("\n");
                section(md, "Broader Context");
                md += (text::trim(d.broader_context).empty() ? "Not provided." : md_block(d.broader_context)) +
                      std::string("\n");
                break;
            }
        }
    }
    return md;
}

std::string to_output_area(const AnalysisResult& result) {
    return canonical_json(result);
}

std::string emit(const AnalysisResult& result, OutputFormat format, const Document* document) {
    switch (format) {
        case OutputFormat::Csv: return to_csv(result);
        case OutputFormat::DocReport: return to_report(result, document);
        case OutputFormat::OutputArea: return to_output_area(result);
    }
    return to_output_area(result);
}

std::string_view content_type(OutputFormat format) noexcept {
    switch (format) {
        case OutputFormat::Csv: return "text/csv; charset=utf-8";
        case OutputFormat::DocReport: return "text/markdown; charset=utf-8";
        case OutputFormat::OutputArea: return "application/json";
    }
    return "application/json";
}

std::string_view file_extension(OutputFormat format) noexcept {
    switch (format) {
        case OutputFormat::Csv: return "csv";
        case OutputFormat::DocReport: return "md";
        case OutputFormat::OutputArea: return "json";
    }
    return "json";
}

}  // namespace qda
