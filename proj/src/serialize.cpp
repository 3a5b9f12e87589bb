#include "gpxva/serialize.hpp"

namespace gpxva {

namespace {

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
    return rows;
}

Mat mat_from_json(const json& rows) {
    if (rows.empty()) return Mat(0, 0);
    Mat m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = vec_from_json(rows[i]).transpose();
    return m;
}

} // namespace

json kernel_to_json(const KernelSpec& spec) {
    json j;
    switch (spec.family) {
    case KernelFamily::SquaredExponential:
        j["family"] = "se";
        j["lengthscale"] = spec.lengthscale.size() == 1 ? json(spec.lengthscale(0))
                                                        : vec_to_json(spec.lengthscale);
        j["variance"] = spec.variance;
        break;
    case KernelFamily::Matern:
        j["family"] = "matern";
        j["nu"] = spec.nu;
        j["lengthscale"] = spec.lengthscale.size() == 1 ? json(spec.lengthscale(0))
                                                        : vec_to_json(spec.lengthscale);
        j["variance"] = spec.variance;
        break;
    case KernelFamily::Linear:
        j["family"] = "linear";
        j["scale"] = spec.variance;
        break;
    case KernelFamily::Sum:
    case KernelFamily::Product: {
        j["family"] = spec.family == KernelFamily::Sum ? "sum" : "product";
        json c = json::array();
        for (const auto& child : spec.children) c.push_back(kernel_to_json(child));
        j["children"] = c;
        break;
    }
    }
    return j;
}

KernelSpec kernel_from_json(const json& j) {
    const std::string family = j.at("family").get<std::string>();
    const auto read_ell = [&](KernelSpec& s) {
        const json& e = j.at("lengthscale");
        s.lengthscale = e.is_array() ? vec_from_json(e) : Vec::Constant(1, e.get<double>());
    };
    KernelSpec s;
    if (family == "se") {
        s.family = KernelFamily::SquaredExponential;
        read_ell(s);
        s.variance = j.value("variance", 1.0);
    } else if (family == "matern") {
        s.family = KernelFamily::Matern;
        s.nu = j.at("nu").get<double>();
        read_ell(s);
        s.variance = j.value("variance", 1.0);
    } else if (family == "linear") {
        s.family = KernelFamily::Linear;
        s.lengthscale.resize(0);
        s.variance = j.value("scale", 1.0);
    } else if (family == "sum" || family == "product") {
        s.family = family == "sum" ? KernelFamily::Sum : KernelFamily::Product;
        s.lengthscale.resize(0);
        for (const auto& c : j.at("children")) s.children.push_back(kernel_from_json(c));
    } else {
        throw ValidationError("kernel_from_json: unknown family '" + family + "'");
    }
    s.validate();
    return s;
}

json gp_to_json(const GpModel& model) {
    json j;
    j["type"] = "gp";
    j["kernel"] = kernel_to_json(model.kernel());
    j["sigma"] = model.noise();
    j["input_map"] = {{"offset", vec_to_json(model.input_map().offset)},
                      {"scale", vec_to_json(model.input_map().scale)}};
    j["output_map"] = {{"offset", model.output_map().offset},
                       {"scale", model.output_map().scale}};
    j["train_x"] = mat_to_json(model.train_inputs());
    j["train_y"] = vec_to_json(model.train_targets());
    j["alpha"] = vec_to_json(model.alpha());
    return j;
}

GpModel gp_from_json(const json& j) {
    require(j.value("type", "") == std::string("gp"), "gp_from_json: not a gp record");
    AffineMap im{vec_from_json(j.at("input_map").at("offset")),
                 vec_from_json(j.at("input_map").at("scale"))};
    OutputMap om{j.at("output_map").at("offset").get<double>(),
                 j.at("output_map").at("scale").get<double>()};
    GpModel model = GpModel::condition_mapped(
        mat_from_json(j.at("train_x")), vec_from_json(j.at("train_y")),
        kernel_from_json(j.at("kernel")), j.at("sigma").get<double>(), im, om);
    const Vec alpha_stored = vec_from_json(j.at("alpha"));
    if ((alpha_stored - model.alpha()).cwiseAbs().maxCoeff() >
        1e-6 * std::max(1.0, alpha_stored.cwiseAbs().maxCoeff()))
        throw NumericError("gp_from_json: stored alpha inconsistent with rebuilt factorization");
    return model;
}

json mgp_to_json(const MgpModel& model) {
    json j;
    j["type"] = "mgp";
    j["kernel"] = kernel_to_json(model.kernel());
    j["sigma"] = model.noise();
    j["b"] = vec_to_json(model.task_factor());
    j["omega"] = model.task_noise();
    j["input_map"] = {{"offset", vec_to_json(model.input_map().offset)},
                      {"scale", vec_to_json(model.input_map().scale)}};
    json oms = json::array();
    for (const auto& om : model.output_maps())
        oms.push_back({{"offset", om.offset}, {"scale", om.scale}});
    j["output_maps"] = oms;
    j["train_x"] = mat_to_json(model.train_inputs());
    j["train_y"] = mat_to_json(model.train_targets());
    return j;
}

MgpModel mgp_from_json(const json& j) {
    require(j.value("type", "") == std::string("mgp"), "mgp_from_json: not a mgp record");
    AffineMap im{vec_from_json(j.at("input_map").at("offset")),
                 vec_from_json(j.at("input_map").at("scale"))};
    std::vector<OutputMap> oms;
    for (const auto& o : j.at("output_maps"))
        oms.push_back({o.at("offset").get<double>(), o.at("scale").get<double>()});
    return MgpModel::condition_mapped(mat_from_json(j.at("train_x")),
                                      mat_from_json(j.at("train_y")),
                                      kernel_from_json(j.at("kernel")),
                                      j.at("sigma").get<double>(), vec_from_json(j.at("b")),
                                      j.at("omega").get<double>(), im, oms);
}

} // namespace gpxva
