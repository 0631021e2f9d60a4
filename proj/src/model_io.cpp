#include "vib/model_io.hpp"

#include <json.hpp>

#include "vib/datagen.hpp"

namespace vib {

using nlohmann::json;

namespace {

json to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Matrix matrix_at(const json& doc, const char* key, Index rows, Index cols) {
    if (!doc.contains(key) || !doc.at(key).is_array()) throw IoError(std::string("model: missing matrix '") + key + "'");
    const json& a = doc.at(key);
    if (Index(a.size()) != rows) throw IoError(std::string("model: '") + key + "' has the wrong row count");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const json& row = a.at(std::size_t(r));
        if (!row.is_array() || Index(row.size()) != cols)
            throw IoError(std::string("model: '") + key + "' has the wrong column count");
        for (Index c = 0; c < cols; ++c) m(r, c) = row.at(std::size_t(c)).get<double>();
    }
    return m;
}

Vector vector_at(const json& doc, const char* key, Index n) {
    if (!doc.contains(key) || !doc.at(key).is_array()) throw IoError(std::string("model: missing vector '") + key + "'");
    const json& a = doc.at(key);
    if (Index(a.size()) != n) throw IoError(std::string("model: '") + key + "' has the wrong length");
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = a.at(std::size_t(i)).get<double>();
    return v;
}

}  // namespace

Matrix Model::encode(const Matrix& X) const {
    if (X.cols() != dim_x()) throw InvalidArgument("encode: input dimension does not match the model");
    if (kind == EncoderKind::linear) return X * linear.W.transpose();
    return dual_responses(dual, X);
}

Matrix Model::decode(const Matrix& R) const {
    if (R.cols() != n_units()) throw InvalidArgument("decode: response dimension does not match the model");
    return R * dec.U.transpose();
}

Model model_from_fit(const LinearFit& fit, double gamma, const Geometry& geometry) {
    Model m;
    m.kind = EncoderKind::linear;
    m.marginal = fit.marg.kind;
    m.gamma = gamma;
    m.geometry = geometry;
    m.linear = fit.enc;
    m.dec = fit.dec;
    m.omega2 = fit.marg.omega2;
    m.nu = fit.marg.nu;
    return m;
}

Model model_from_fit(const KernelFit& fit, double gamma, const Geometry& geometry) {
    Model m;
    m.kind = EncoderKind::dual;
    m.marginal = fit.marg.kind;
    m.gamma = gamma;
    m.geometry = geometry;
    m.dual = fit.enc;
    m.dec = fit.dec;
    m.omega2 = fit.marg.omega2;
    m.nu = fit.marg.nu;
    return m;
}

std::string model_to_json(const Model& m) {
    json doc;
    doc["format"] = "vib-model";
    doc["version"] = 1;
    doc["encoder"] = m.kind == EncoderKind::linear ? "linear" : "dual";
    doc["marginal"] = m.marginal == MarginalKind::gaussian ? "gaussian" : "student";
    doc["gamma"] = m.gamma;
    doc["dims"] = {{"n_units", m.n_units()}, {"d_x", m.dim_x()}, {"d_y", m.dim_y()}};
    doc["geometry"] = {{"task", m.geometry.task},
                       {"side", m.geometry.side},
                       {"left_cols", m.geometry.left_cols},
                       {"right_cols", m.geometry.right_cols}};
    if (m.kind == EncoderKind::linear) {
        doc["W"] = to_json(m.linear.W);
        doc["Sigma"] = to_json(m.linear.Sigma);
    } else {
        doc["A"] = to_json(m.dual.A);
        doc["Sigma"] = to_json(m.dual.Sigma);
        doc["subset_idx"] = m.dual.subset_idx;
        doc["kernel"] = {{"kind", "gaussian"},
                         {"kappa", m.dual.kernel.kappa},
                         {"lambda", m.dual.kernel.lambda},
                         {"subset_size", Index(m.dual.subset_idx.size())}};
        doc["anchors"] = to_json(m.dual.anchors);
    }
    doc["U"] = to_json(m.dec.U);
    doc["Lambda"] = to_json(m.dec.Lambda);
    doc["omega2"] = to_json(m.omega2);
    doc["nu"] = to_json(m.nu);
    return doc.dump(1) + "\n";
}

Model model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("model: not valid JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "vib-model") throw IoError("model: format tag is not 'vib-model'");
        if (doc.value("version", 0) != 1) throw IoError("model: unsupported version");
        Model m;
        const std::string enc = doc.at("encoder").get<std::string>();
        if (enc != "linear" && enc != "dual") throw IoError("model: unknown encoder '" + enc + "'");
        m.kind = enc == "linear" ? EncoderKind::linear : EncoderKind::dual;
        const std::string marg = doc.at("marginal").get<std::string>();
        if (marg != "gaussian" && marg != "student") throw IoError("model: unknown marginal '" + marg + "'");
        m.marginal = marg == "gaussian" ? MarginalKind::gaussian : MarginalKind::student;
        m.gamma = doc.at("gamma").get<double>();
        const Index nr = doc.at("dims").at("n_units").get<Index>();
        const Index dx = doc.at("dims").at("d_x").get<Index>();
        const Index dy = doc.at("dims").at("d_y").get<Index>();
        const json& g = doc.at("geometry");
        m.geometry = Geometry{g.at("task").get<std::string>(), g.at("side").get<int>(), g.at("left_cols").get<int>(),
                              g.at("right_cols").get<int>()};
        if (m.kind == EncoderKind::linear) {
            m.linear.W = matrix_at(doc, "W", nr, dx);
            m.linear.Sigma = matrix_at(doc, "Sigma", nr, nr);
        } else {
            m.dual.subset_idx = doc.at("subset_idx").get<std::vector<Index>>();
            const Index mm = Index(m.dual.subset_idx.size());
            const json& k = doc.at("kernel");
            m.dual.kernel = KernelConfig{k.at("kappa").get<double>(), k.at("lambda").get<double>(), mm};
            m.dual.A = matrix_at(doc, "A", nr, mm);
            m.dual.Sigma = matrix_at(doc, "Sigma", nr, nr);
            m.dual.anchors = matrix_at(doc, "anchors", mm, dx);
        }
        m.dec.U = matrix_at(doc, "U", dy, nr);
        m.dec.Lambda = matrix_at(doc, "Lambda", dy, dy);
        m.omega2 = vector_at(doc, "omega2", nr);
        m.nu = vector_at(doc, "nu", nr);
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("model: malformed document: ") + e.what());
    }
}

void save_model(const std::string& path, const Model& model) { write_file(path, model_to_json(model)); }

Model load_model(const std::string& path) { return model_from_json(read_file(path)); }

}  // namespace vib
