#include "profiler/features.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <sstream>

#include "profiler/errors.hpp"
#include "profiler/linalg.hpp"
#include "profiler/rng.hpp"
#include "profiler/text.hpp"

namespace profiler::features {

namespace {
constexpr char kJoiner = '\x1f';  // unit separator between words of a w-gram
}

UserDoc UserDoc::from_user(const corpus::UserRecord& user) {
    UserDoc doc;
    for (std::size_t i = 0; i < user.tweets.size(); ++i) {
        if (i > 0) doc.text.push_back('\n');
        doc.text += user.tweets[i].text;
    }
    return doc;
}

NgramSpec NgramSpec::defaults_for(corpus::Lang lang) {
    NgramSpec spec;
    spec.char_ns = {3, 4, 5};
    spec.word_ns = lang == corpus::Lang::en ? std::vector<int>{1, 2, 3} : std::vector<int>{1, 2};
    spec.min_total_freq = 2;
    return spec;
}

std::map<std::string, long> extract_ngrams(const UserDoc& doc, const NgramSpec& spec) {
    if (spec.word_ns.empty() || spec.char_ns.empty() || spec.min_total_freq < 1)
        throw InputError("extract_ngrams: invalid n-gram spec");

    std::map<std::string, long> counts;

    const auto tokens = text::tokenize(doc.text);
    for (int n : spec.word_ns) {
        if (n < 1) throw InputError("extract_ngrams: word n must be >= 1");
        const std::size_t un = static_cast<std::size_t>(n);
        if (tokens.size() < un) continue;
        for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
            std::string key = "w" + std::to_string(n) + ":";
            for (std::size_t j = 0; j < un; ++j) {
                if (j > 0) key.push_back(kJoiner);
                key += tokens[i + j];
            }
            ++counts[key];
        }
    }

    // Char n-grams per line so they never span tweet boundaries.
    std::size_t start = 0;
    while (start <= doc.text.size()) {
        std::size_t end = doc.text.find('\n', start);
        if (end == std::string::npos) end = doc.text.size();
        const std::string_view line(doc.text.data() + start, end - start);
        auto cps = text::decode_utf8(line);
        for (char32_t& cp : cps) cp = text::lower_codepoint(cp);
        for (int n : spec.char_ns) {
            if (n < 1) throw InputError("extract_ngrams: char n must be >= 1");
            const std::size_t un = static_cast<std::size_t>(n);
            if (cps.size() < un) continue;
            for (std::size_t i = 0; i + un <= cps.size(); ++i) {
                std::string key = "c" + std::to_string(n) + ":";
                for (std::size_t j = 0; j < un; ++j) text::append_utf8(key, cps[i + j]);
                ++counts[key];
            }
        }
        if (end == doc.text.size()) break;
        start = end + 1;
    }
    return counts;
}

TfidfModel fit_tfidf(const std::vector<UserDoc>& train_docs, const NgramSpec& spec) {
    if (train_docs.size() < 2) throw InputError("fit_tfidf: need at least 2 documents");

    std::map<std::string, long> total;
    std::map<std::string, long> df;
    for (const auto& doc : train_docs) {
        const auto counts = extract_ngrams(doc, spec);
        for (const auto& [key, c] : counts) {
            total[key] += c;
            ++df[key];
        }
    }

    TfidfModel model;
    const double n_docs = static_cast<double>(train_docs.size());
    std::size_t col = 0;
    for (const auto& [key, c] : total) {  // std::map: lexicographic key order
        if (c < spec.min_total_freq) continue;
        model.feature_index.emplace(key, col++);
        model.idf.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[key]))) + 1.0);
    }
    if (model.idf.empty())
        throw InputError("fit_tfidf: no feature reaches min_total_freq=" +
                         std::to_string(spec.min_total_freq));
    return model;
}

std::vector<double> transform_tfidf(const TfidfModel& model, const UserDoc& doc,
                                    const NgramSpec& spec) {
    std::vector<double> v(model.n_features(), 0.0);
    const auto counts = extract_ngrams(doc, spec);
    for (const auto& [key, c] : counts) {
        const auto it = model.feature_index.find(key);
        if (it == model.feature_index.end()) continue;  // unseen keys ignored
        v[it->second] = static_cast<double>(c) * model.idf[it->second];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

LsaFit fit_lsa(const Tensor& train_matrix, std::size_t k, std::uint64_t seed) {
    if (train_matrix.rank() != 2) throw InputError("fit_lsa: rank-2 matrix required");
    const std::size_t rows = train_matrix.dim(0), cols = train_matrix.dim(1);
    if (rows < 2) throw InputError("fit_lsa: need at least 2 rows");
    if (k == 0) throw InputError("fit_lsa: k must be positive");
    if (!train_matrix.all_finite()) throw NumericError("fit_lsa: non-finite input");

    LsaFit fit;
    fit.requested_k = k;
    const std::size_t k_eff = std::min(k, std::min(rows, cols));
    const std::size_t sketch = std::min(k_eff + 10, std::min(rows, cols));

    // Range finder: Q spans the dominant column space of X.
    SplitMix64 rng(seed);
    Tensor gauss({cols, sketch});
    for (std::size_t i = 0; i < gauss.numel(); ++i) gauss[i] = rng.next_gaussian();

    Tensor y = linalg::matmul(train_matrix, gauss);  // (rows, sketch)
    Tensor q = linalg::qr_thin_q(y);
    for (int it = 0; it < 7; ++it) {  // power iterations sharpen the spectrum
        Tensor z;
        linalg::gemm(train_matrix, true, q, false, z, false);  // (cols, sketch)
        z = linalg::qr_thin_q(z);
        Tensor y2;
        linalg::gemm(train_matrix, false, z, false, y2, false);
        q = linalg::qr_thin_q(y2);
    }

    // B = Q^T X is small (sketch x cols); eigendecompose B B^T.
    Tensor b;
    linalg::gemm(q, true, train_matrix, false, b, false);
    Tensor bbt;
    linalg::gemm(b, false, b, true, bbt, false);
    const auto eig = linalg::jacobi_eigh(bbt);

    fit.singular_values.resize(k_eff);
    fit.components = Tensor({cols, k_eff});
    for (std::size_t j = 0; j < k_eff; ++j) {
        const double sigma = std::sqrt(std::max(eig.values[j], 0.0));
        fit.singular_values[j] = sigma;
        if (sigma > 1e-300) {
            // v_j = B^T u_j / sigma
            for (std::size_t c = 0; c < cols; ++c) {
                double s = 0.0;
                for (std::size_t r = 0; r < b.dim(0); ++r) s += b.at(r, c) * eig.vectors.at(r, j);
                fit.components.at(c, j) = s / sigma;
            }
        } else {
            // Rank-deficient tail: deterministic orthonormal completion against
            // the columns already placed, starting from standard basis vectors.
            std::vector<double> v(cols, 0.0);
            for (std::size_t attempt = 0; attempt < cols; ++attempt) {
                std::fill(v.begin(), v.end(), 0.0);
                v[attempt] = 1.0;
                for (std::size_t p = 0; p < j; ++p) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += v[c] * fit.components.at(c, p);
                    for (std::size_t c = 0; c < cols; ++c) v[c] -= dot * fit.components.at(c, p);
                }
                double norm = 0.0;
                for (double x : v) norm += x * x;
                norm = std::sqrt(norm);
                if (norm > 1e-6) {
                    for (double& x : v) x /= norm;
                    break;
                }
            }
            for (std::size_t c = 0; c < cols; ++c) fit.components.at(c, j) = v[c];
        }
    }
    return fit;
}

std::vector<double> project_lsa(const LsaProjector& projector, const std::vector<double>& tfidf_vec) {
    const std::size_t f = projector.components.dim(0);
    const std::size_t k = projector.components.dim(1);
    if (tfidf_vec.size() != f)
        throw InputError("project_lsa: vector length " + std::to_string(tfidf_vec.size()) +
                         " does not match feature count " + std::to_string(f));
    std::vector<double> z(k, 0.0);
    for (std::size_t c = 0; c < f; ++c) {
        const double x = tfidf_vec[c];
        if (x == 0.0) continue;
        const double* row = projector.components.data() + c * k;
        for (std::size_t j = 0; j < k; ++j) z[j] += x * row[j];
    }
    return z;
}

std::vector<double> lsa_vector(const LsaProjector& projector, const UserDoc& doc) {
    return project_lsa(projector, transform_tfidf(projector.tfidf, doc, projector.spec));
}

LsaProjector fit_projector(const std::vector<corpus::UserRecord>& train_users,
                           const NgramSpec& spec, std::size_t k, std::uint64_t seed) {
    std::vector<UserDoc> docs;
    docs.reserve(train_users.size());
    for (const auto& u : train_users) docs.push_back(UserDoc::from_user(u));

    LsaProjector proj;
    proj.spec = spec;
    proj.tfidf = fit_tfidf(docs, spec);

    Tensor matrix({docs.size(), proj.tfidf.n_features()});
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto v = transform_tfidf(proj.tfidf, docs[i], spec);
        for (std::size_t j = 0; j < v.size(); ++j) matrix.at(i, j) = v[j];
    }

    auto fit = fit_lsa(matrix, k, seed);
    proj.components = std::move(fit.components);
    proj.singular_values = std::move(fit.singular_values);
    return proj;
}

std::string tfidf_sidecar_text(const TfidfModel& model) {
    std::string out;
    for (const auto& [key, col] : model.feature_index) {
        out += key;
        out.push_back('\t');
        out += std::to_string(col);
        out.push_back('\t');
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", model.idf[col]);
        out += buf;
        out.push_back('\n');
    }
    return out;
}

TfidfModel tfidf_from_sidecar_text(const std::string& text) {
    TfidfModel model;
    std::size_t start = 0, line_no = 0;
    std::vector<std::pair<std::size_t, double>> cols;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string_view::npos ? std::string_view::npos : line.find('\t', t1 + 1);
        if (t2 == std::string_view::npos)
            throw InputError("tf-idf sidecar line " + std::to_string(line_no) +
                             ": expected key<TAB>column<TAB>idf");
        std::size_t col = 0;
        double idf = 0.0;
        auto r1 = std::from_chars(line.data() + t1 + 1, line.data() + t2, col);
        auto r2 = std::from_chars(line.data() + t2 + 1, line.data() + line.size(), idf);
        if (r1.ec != std::errc{} || r2.ec != std::errc{})
            throw InputError("tf-idf sidecar line " + std::to_string(line_no) + ": bad number");
        model.feature_index.emplace(std::string(line.substr(0, t1)), col);
        cols.emplace_back(col, idf);
    }
    model.idf.resize(cols.size(), 0.0);
    for (const auto& [col, idf] : cols) {
        if (col >= model.idf.size())
            throw InputError("tf-idf sidecar: column index out of range");
        model.idf[col] = idf;
    }
    return model;
}

}  // namespace profiler::features
