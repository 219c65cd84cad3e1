#include "profiler/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "profiler/errors.hpp"
#include "profiler/rng.hpp"

namespace profiler::corpus {

using json = nlohmann::json;

std::string to_string(Lang lang) {
    switch (lang) {
        case Lang::en: return "en";
        case Lang::es: return "es";
        case Lang::ar: return "ar";
    }
    return "en";
}

std::string to_string(Gender g) { return g == Gender::female ? "female" : "male"; }

Lang lang_from_string(const std::string& s) {
    if (s == "en") return Lang::en;
    if (s == "es") return Lang::es;
    if (s == "ar") return Lang::ar;
    throw InputError("unknown language '" + s + "' (expected en, es or ar)");
}

Gender gender_from_string(const std::string& s) {
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "female") return Gender::female;
    if (lower == "male") return Gender::male;
    throw InputError("unknown gender token '" + s + "'");
}

namespace {

std::string trimmed(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

void validate_tweet(const Tweet& t, const std::string& who) {
    if (t.text.size() > 5000)
        throw InputError(who + ": tweet exceeds 5000 bytes");
    if (t.text.find('\0') != std::string::npos)
        throw InputError(who + ": tweet contains NUL byte");
    if (trimmed(t.text).empty())
        throw InputError(who + ": tweet is empty after trimming");
}

// ---- minimal XML reader for the PAN author layout -------------------------
//
// Handles exactly what the PAN files contain: an <author> root, nested
// wrapper elements, <document> elements whose content is CDATA or entity-
// encoded text, comments and an optional prolog. Attribute values are
// skipped. Errors carry the byte offset.

struct PanXmlReader {
    const std::string& buf;
    const std::string& file;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw InputError(file + ": malformed XML at byte " + std::to_string(at) + ": " + msg);
    }

    bool starts_with(std::string_view s) const { return buf.compare(pos, s.size(), s) == 0; }

    void skip_ws() {
        while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    }

    void skip_misc() {  // whitespace, prolog, comments
        for (;;) {
            skip_ws();
            if (starts_with("<?")) {
                const auto end = buf.find("?>", pos);
                if (end == std::string::npos) fail("unterminated processing instruction", pos);
                pos = end + 2;
            } else if (starts_with("<!--")) {
                const auto end = buf.find("-->", pos);
                if (end == std::string::npos) fail("unterminated comment", pos);
                pos = end + 3;
            } else {
                return;
            }
        }
    }

    static void decode_entities(const std::string& in, std::string& out) {
        std::size_t i = 0;
        while (i < in.size()) {
            if (in[i] != '&') {
                out.push_back(in[i++]);
                continue;
            }
            const auto semi = in.find(';', i);
            if (semi == std::string::npos || semi - i > 10) {
                out.push_back(in[i++]);
                continue;
            }
            const std::string ent = in.substr(i + 1, semi - i - 1);
            if (ent == "amp") out.push_back('&');
            else if (ent == "lt") out.push_back('<');
            else if (ent == "gt") out.push_back('>');
            else if (ent == "quot") out.push_back('"');
            else if (ent == "apos") out.push_back('\'');
            else if (!ent.empty() && ent[0] == '#') {
                char32_t cp = 0;
                const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
                for (std::size_t k = hex ? 2 : 1; k < ent.size(); ++k) {
                    const char c = ent[k];
                    int digit;
                    if (c >= '0' && c <= '9') digit = c - '0';
                    else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
                    else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
                    else { digit = -1; }
                    if (digit < 0) { cp = 0; break; }
                    cp = cp * (hex ? 16 : 10) + static_cast<char32_t>(digit);
                }
                if (cp == 0) { out.append(in, i, semi - i + 1); }
                else {
                    // append UTF-8
                    std::string tmp;
                    if (cp < 0x80) tmp.push_back(static_cast<char>(cp));
                    else if (cp < 0x800) {
                        tmp.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                        tmp.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
                    } else if (cp < 0x10000) {
                        tmp.push_back(static_cast<char>(0xE0 | (cp >> 12)));
                        tmp.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                        tmp.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
                    } else {
                        tmp.push_back(static_cast<char>(0xF0 | (cp >> 18)));
                        tmp.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
                        tmp.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                        tmp.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
                    }
                    out += tmp;
                }
            } else {
                out.append(in, i, semi - i + 1);
            }
            i = semi + 1;
        }
    }

    /// Reads element content up to the matching close tag of `name`,
    /// collecting text and CDATA. Nested elements are not allowed inside
    /// <document>.
    std::string read_text_content(const std::string& name) {
        std::string out;
        for (;;) {
            if (pos >= buf.size()) fail("unterminated <" + name + ">", pos);
            if (buf[pos] == '<') {
                if (starts_with("<![CDATA[")) {
                    const auto end = buf.find("]]>", pos + 9);
                    if (end == std::string::npos) fail("unterminated CDATA", pos);
                    out.append(buf, pos + 9, end - pos - 9);
                    pos = end + 3;
                } else if (starts_with("<!--")) {
                    const auto end = buf.find("-->", pos);
                    if (end == std::string::npos) fail("unterminated comment", pos);
                    pos = end + 3;
                } else if (starts_with("</")) {
                    const auto end = buf.find('>', pos);
                    if (end == std::string::npos) fail("unterminated close tag", pos);
                    const std::string tag = trimmed(buf.substr(pos + 2, end - pos - 2));
                    if (tag != name) fail("expected </" + name + ">, found </" + tag + ">", pos);
                    pos = end + 1;
                    return out;
                } else {
                    fail("unexpected element inside <" + name + ">", pos);
                }
            } else {
                const auto next = buf.find('<', pos);
                const auto stop = next == std::string::npos ? buf.size() : next;
                std::string raw = buf.substr(pos, stop - pos);
                decode_entities(raw, out);
                pos = stop;
            }
        }
    }

    /// Parses the whole file, returning document texts in order.
    std::vector<std::string> parse_documents() {
        skip_misc();
        if (!starts_with("<author")) fail("expected <author> root", pos);
        std::vector<std::string> docs;
        std::vector<std::string> open;  // element stack, author at bottom
        for (;;) {
            if (pos >= buf.size()) {
                if (!open.empty()) fail("unterminated <" + open.back() + ">", pos);
                break;
            }
            skip_misc();
            if (pos >= buf.size()) {
                if (!open.empty()) fail("unterminated <" + open.back() + ">", pos);
                break;
            }
            if (buf[pos] != '<') {
                if (open.empty()) fail("stray text outside root", pos);
                ++pos;  // ignorable text between elements
                continue;
            }
            if (starts_with("</")) {
                const auto end = buf.find('>', pos);
                if (end == std::string::npos) fail("unterminated close tag", pos);
                const std::string tag = trimmed(buf.substr(pos + 2, end - pos - 2));
                if (open.empty() || open.back() != tag) fail("mismatched </" + tag + ">", pos);
                open.pop_back();
                pos = end + 1;
                if (open.empty()) break;
                continue;
            }
            // open tag
            const std::size_t tag_at = pos;
            auto end = buf.find('>', pos);
            if (end == std::string::npos) fail("unterminated tag", tag_at);
            const bool self_close = buf[end - 1] == '/';
            std::string inside = buf.substr(pos + 1, end - pos - 1 - (self_close ? 1 : 0));
            std::string name = inside;
            const auto sp = name.find_first_of(" \t\r\n");
            if (sp != std::string::npos) name = name.substr(0, sp);
            if (name.empty()) fail("empty tag name", tag_at);
            pos = end + 1;
            if (self_close) continue;
            if (name == "document") {
                docs.push_back(read_text_content("document"));
            } else {
                open.push_back(name);
            }
        }
        return docs;
    }
};

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Dataset load_pan_dir(const std::filesystem::path& dir, Lang lang) {
    if (!std::filesystem::is_directory(dir))
        throw InputError("load_pan_dir: not a directory: " + dir.string());

    std::vector<std::filesystem::path> xml_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xml")
            xml_files.push_back(entry.path());
    }
    std::sort(xml_files.begin(), xml_files.end());  // order-stable ingestion

    // truth.txt: user_id:::gender
    std::unordered_map<std::string, Gender> truth;
    std::vector<std::string> truth_order;
    const auto truth_path = dir / "truth.txt";
    if (std::filesystem::exists(truth_path)) {
        std::ifstream in(truth_path, std::ios::binary);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trimmed(line).empty()) continue;
            const auto sep = line.find(":::");
            if (sep == std::string::npos || line.find(":::", sep + 3) != std::string::npos)
                throw InputError("truth.txt line " + std::to_string(line_no) +
                                 ": expected 'user_id:::gender'");
            const std::string uid = line.substr(0, sep);
            const Gender g = gender_from_string(line.substr(sep + 3));
            if (!truth.emplace(uid, g).second)
                throw InputError("truth.txt line " + std::to_string(line_no) +
                                 ": duplicate user_id '" + uid + "'");
            truth_order.push_back(uid);
        }
    } else if (!xml_files.empty()) {
        throw InputError("load_pan_dir: missing truth.txt in " + dir.string());
    }

    Dataset ds;
    ds.lang = lang;
    ds.labeled = true;
    std::unordered_set<std::string> seen;
    for (const auto& file : xml_files) {
        const std::string uid = file.stem().string();
        const auto it = truth.find(uid);
        if (it == truth.end())
            throw InputError("load_pan_dir: no truth entry for user_id '" + uid + "'");
        seen.insert(uid);

        const std::string content = read_file(file);
        PanXmlReader reader{content, file.string()};
        UserRecord user;
        user.user_id = uid;
        user.lang = lang;
        user.label = it->second;
        for (auto& doc : reader.parse_documents()) user.tweets.push_back(Tweet{std::move(doc)});
        if (user.tweets.empty())
            throw InputError("load_pan_dir: user '" + uid + "' has no documents");
        for (const auto& t : user.tweets) validate_tweet(t, "user '" + uid + "'");
        ds.users.push_back(std::move(user));
    }

    for (const auto& uid : truth_order) {
        if (!seen.count(uid))
            throw InputError("load_pan_dir: no XML file for truth entry '" + uid + "'");
    }
    return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_jsonl: cannot open " + path.string());

    Dataset ds;
    bool lang_set = false;
    bool all_labeled = true;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trimmed(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError("load_jsonl: " + path.string() + " line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        const std::string at = path.string() + " line " + std::to_string(line_no);
        if (!obj.is_object()) throw InputError("load_jsonl: " + at + ": expected an object");
        if (!obj.contains("user_id") || !obj["user_id"].is_string())
            throw InputError("load_jsonl: " + at + ": missing \"user_id\"");
        if (!obj.contains("lang") || !obj["lang"].is_string())
            throw InputError("load_jsonl: " + at + ": missing \"lang\"");
        if (!obj.contains("tweets") || !obj["tweets"].is_array())
            throw InputError("load_jsonl: " + at + ": missing \"tweets\"");

        UserRecord user;
        user.user_id = obj["user_id"].get<std::string>();
        user.lang = lang_from_string(obj["lang"].get<std::string>());
        for (const auto& t : obj["tweets"]) {
            if (!t.is_string()) throw InputError("load_jsonl: " + at + ": tweets must be strings");
            user.tweets.push_back(Tweet{t.get<std::string>()});
        }
        if (user.tweets.empty())
            throw InputError("load_jsonl: " + at + ": empty tweets array");
        for (const auto& t : user.tweets) validate_tweet(t, "load_jsonl: " + at);
        if (obj.contains("label")) {
            user.label = gender_from_string(obj["label"].get<std::string>());
        } else {
            all_labeled = false;
        }

        if (!seen.insert(user.user_id).second)
            throw InputError("load_jsonl: " + at + ": duplicate user_id '" + user.user_id + "'");
        if (!lang_set) {
            ds.lang = user.lang;
            lang_set = true;
        } else if (user.lang != ds.lang) {
            throw InputError("load_jsonl: " + at + ": mixed languages in one corpus");
        }
        ds.users.push_back(std::move(user));
    }
    ds.labeled = ds.users.empty() || all_labeled;
    return ds;
}

void write_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("write_jsonl: cannot open " + path.string() + " for writing");
    for (const auto& user : dataset.users) {
        json obj = json::object();
        obj["user_id"] = user.user_id;
        obj["lang"] = to_string(user.lang);
        obj["tweets"] = json::array();
        for (const auto& t : user.tweets) obj["tweets"].push_back(t.text);
        if (user.label) obj["label"] = to_string(*user.label);
        out << obj.dump() << '\n';
    }
    if (!out) throw InputError("write_jsonl: write failed for " + path.string());
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw InputError("split: train_fraction must be in (0, 1)");
    if (!dataset.labeled) throw InputError("split: dataset must be labeled");
    if (dataset.users.size() < 2) throw InputError("split: need at least 2 users");

    std::vector<std::size_t> order(dataset.users.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    SplitMix64 rng(spec.seed);
    std::vector<std::size_t> train_idx, val_idx;
    if (spec.stratified) {
        // Shuffle within each gender group, split each by the same fraction.
        for (const Gender g : {Gender::female, Gender::male}) {
            std::vector<std::size_t> group;
            for (std::size_t i : order)
                if (dataset.users[i].label == g) group.push_back(i);
            rng.shuffle(group);
            const auto n_train = static_cast<std::size_t>(
                std::ceil(spec.train_fraction * static_cast<double>(group.size())));
            for (std::size_t i = 0; i < group.size(); ++i)
                (i < n_train ? train_idx : val_idx).push_back(group[i]);
        }
    } else {
        rng.shuffle(order);
        const auto n_train = static_cast<std::size_t>(
            std::ceil(spec.train_fraction * static_cast<double>(order.size())));
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < n_train ? train_idx : val_idx).push_back(order[i]);
    }

    if (train_idx.empty() || val_idx.empty())
        throw InputError("split: a side of the split would be empty");

    auto take = [&](const std::vector<std::size_t>& idx) {
        Dataset part;
        part.lang = dataset.lang;
        part.labeled = dataset.labeled;
        part.users.reserve(idx.size());
        for (std::size_t i : idx) part.users.push_back(dataset.users[i]);
        return part;
    };
    return {take(train_idx), take(val_idx)};
}

void validate(const Dataset& dataset) {
    std::unordered_set<std::string> seen;
    for (const auto& user : dataset.users) {
        if (user.lang != dataset.lang)
            throw InputError("dataset: user '" + user.user_id + "' has a different language");
        if (user.tweets.empty())
            throw InputError("dataset: user '" + user.user_id + "' has no tweets");
        if (!seen.insert(user.user_id).second)
            throw InputError("dataset: duplicate user_id '" + user.user_id + "'");
        if (dataset.labeled && !user.label)
            throw InputError("dataset: labeled dataset but user '" + user.user_id +
                             "' has no label");
        for (const auto& t : user.tweets) validate_tweet(t, "user '" + user.user_id + "'");
    }
}

}  // namespace profiler::corpus
