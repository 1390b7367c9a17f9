#include "rmsim/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rmsim {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_num(const std::string& v, int line) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) {
        throw ParseError("not a number: '" + v + "'", line);
    }
    return out;
}

int to_int(const std::string& v, int line) {
    int out = 0;
    const char* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) {
        throw ParseError("not an integer: '" + v + "'", line);
    }
    return out;
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("not a boolean (use true/false/1/0): '" + v + "'", line);
}

struct Kv {
    std::string key, value;
    int line = 0;
    bool used = false;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Kv> kvs;
};

/// Pulls typed values out of one section instance; anything left unread when
/// finish() runs is an unknown-key parse error.
class SectionReader {
public:
    explicit SectionReader(Section& s) : s_(s) {
        for (size_t i = 0; i < s_.kvs.size(); ++i) {
            for (size_t j = i + 1; j < s_.kvs.size(); ++j) {
                if (s_.kvs[i].key == s_.kvs[j].key) {
                    throw ParseError("duplicate key '" + s_.kvs[j].key + "' in [" + s_.name + "]",
                                     s_.kvs[j].line);
                }
            }
        }
    }

    Kv* find(const std::string& key) {
        for (auto& kv : s_.kvs) {
            if (kv.key == key) {
                kv.used = true;
                return &kv;
            }
        }
        return nullptr;
    }

    std::optional<std::string> str(const std::string& key) {
        if (Kv* kv = find(key)) return kv->value;
        return std::nullopt;
    }
    std::string require_str(const std::string& key) {
        if (Kv* kv = find(key)) return kv->value;
        throw ParseError("[" + s_.name + "] is missing required key '" + key + "'", s_.line);
    }
    double num(const std::string& key, double def) {
        if (Kv* kv = find(key)) return to_num(kv->value, kv->line);
        return def;
    }
    double require_num(const std::string& key) {
        Kv* kv = find(key);
        if (!kv) {
            throw ParseError("[" + s_.name + "] is missing required key '" + key + "'", s_.line);
        }
        return to_num(kv->value, kv->line);
    }
    int integer(const std::string& key, int def) {
        if (Kv* kv = find(key)) return to_int(kv->value, kv->line);
        return def;
    }
    int require_int(const std::string& key) {
        Kv* kv = find(key);
        if (!kv) {
            throw ParseError("[" + s_.name + "] is missing required key '" + key + "'", s_.line);
        }
        return to_int(kv->value, kv->line);
    }
    bool boolean(const std::string& key, bool def) {
        if (Kv* kv = find(key)) return to_bool(kv->value, kv->line);
        return def;
    }

    void finish() {
        for (const auto& kv : s_.kvs) {
            if (!kv.used) {
                throw ParseError("unknown key '" + kv.key + "' in [" + s_.name + "]", kv.line);
            }
        }
    }

private:
    Section& s_;
};

void set_machine_field(SyncMachineParams& p, const std::string& field, double value) {
    const bool flag = value != 0.0;
    if (field == "s_rated_mva") p.s_rated_mva = value;
    else if (field == "p_dispatch_mw") p.p_dispatch_mw = value;
    else if (field == "h") p.h = value;
    else if (field == "d") p.d = value;
    else if (field == "xd") p.xd = value;
    else if (field == "xq") p.xq = value;
    else if (field == "xdp") p.xdp = value;
    else if (field == "xqp") p.xqp = value;
    else if (field == "td0p") p.td0p = value;
    else if (field == "tq0p") p.tq0p = value;
    else if (field == "ra") p.ra = value;
    else if (field == "exciter_enabled") p.exciter.enabled = flag;
    else if (field == "ka") p.exciter.ka = value;
    else if (field == "ta") p.exciter.ta = value;
    else if (field == "efd_min") p.exciter.efd_min = value;
    else if (field == "efd_max") p.exciter.efd_max = value;
    else if (field == "pss_enabled") p.pss.enabled = flag;
    else if (field == "pss_ks") p.pss.ks = value;
    else if (field == "pss_tw") p.pss.tw = value;
    else if (field == "pss_t1") p.pss.t1 = value;
    else if (field == "pss_t2") p.pss.t2 = value;
    else if (field == "pss_t3") p.pss.t3 = value;
    else if (field == "pss_t4") p.pss.t4 = value;
    else if (field == "pss_vs_max") p.pss.vs_max = value;
    else if (field == "pss_vs_min") p.pss.vs_min = value;
    else if (field == "gov_enabled") p.governor.enabled = flag;
    else if (field == "gov_droop" || field == "gov_r") p.governor.droop = value;
    else if (field == "gov_tg") p.governor.tg = value;
    else throw StructuralError("unknown machine field '" + field + "'");
}

void set_gfm_field(GfmVsmParams& p, const std::string& field, double value) {
    if (field == "s_rated_mva") p.s_rated_mva = value;
    else if (field == "p_dispatch_mw") p.p_dispatch_mw = value;
    else if (field == "ta_vsm") p.ta_vsm = value;
    else if (field == "d_gfm") p.d_gfm = value;
    else if (field == "i_max") p.i_max = value;
    else if (field == "x_c") p.x_c = value;
    else if (field == "t_volt") p.t_volt = value;
    else if (field == "t_curr") p.t_curr = value;
    else if (field == "pll_kp") p.pll.kp = value;
    else if (field == "pll_ki") p.pll.ki = value;
    else if (field == "pll_tf") p.pll.tf = value;
    else throw StructuralError("unknown gfm field '" + field + "'");
}

const char* const kMachineNumKeys[] = {
    "s_rated_mva", "p_dispatch_mw", "h", "d", "xd", "xq", "xdp", "xqp", "td0p", "tq0p", "ra",
    "ka", "ta", "efd_min", "efd_max", "pss_ks", "pss_tw", "pss_t1", "pss_t2", "pss_t3",
    "pss_t4", "pss_vs_max", "pss_vs_min", "gov_droop", "gov_tg"};
const char* const kMachineFlagKeys[] = {"exciter_enabled", "pss_enabled", "gov_enabled"};
const char* const kGfmNumKeys[] = {"s_rated_mva", "p_dispatch_mw", "ta_vsm", "d_gfm", "i_max",
                                   "x_c", "t_volt", "t_curr", "pll_kp", "pll_ki", "pll_tf"};

std::string num_str(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

Scenario parse_scenario(const std::string& text) {
    std::vector<Section> sections;
    static const std::set<std::string> known_sections = {"system", "bus",    "branch", "load",
                                                         "machine", "gfm",   "events", "study"};
    {
        std::istringstream ss(text);
        std::string raw;
        int line = 0;
        Section* cur = nullptr;
        while (std::getline(ss, raw)) {
            ++line;
            const std::string s = trim(raw);
            if (s.empty() || s[0] == '#') continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ParseError("malformed section header", line);
                const std::string name = trim(s.substr(1, s.size() - 2));
                if (!known_sections.count(name)) {
                    throw ParseError("unknown section [" + name + "]", line);
                }
                sections.push_back(Section{name, line, {}});
                cur = &sections.back();
            } else {
                const auto eq = s.find('=');
                if (eq == std::string::npos) {
                    throw ParseError("expected 'key = value' or a section header", line);
                }
                if (!cur) throw ParseError("key/value pair before any section header", line);
                const std::string key = trim(s.substr(0, eq));
                const std::string value = trim(s.substr(eq + 1));
                if (key.empty()) throw ParseError("empty key", line);
                if (value.empty()) throw ParseError("empty value for key '" + key + "'", line);
                cur->kvs.push_back(Kv{key, value, line});
            }
        }
    }

    Scenario sc;
    int n_system = 0, n_study = 0, n_machine = 0, n_gfm = 0;
    for (auto& section : sections) {
        SectionReader r(section);
        if (section.name == "system") {
            if (++n_system > 1) throw ParseError("duplicate [system] section", section.line);
            sc.name = r.str("name").value_or(sc.name);
            sc.s_base_mva = r.num("s_base_mva", sc.s_base_mva);
            sc.f_hz = r.num("f_hz", sc.f_hz);
            sc.sim.t_end = r.num("t_end", sc.sim.t_end);
            sc.sim.dt = r.num("dt", sc.sim.dt);
            if (auto integ = r.str("integrator")) {
                if (*integ == "trapezoidal") {
                    sc.sim.integrator = Integrator::trapezoidal;
                } else if (*integ == "rk4") {
                    sc.sim.integrator = Integrator::rk4;
                } else {
                    throw ParseError("integrator must be trapezoidal or rk4", section.line);
                }
            }
            sc.sim.network_solve_tol = r.num("network_solve_tol", sc.sim.network_solve_tol);
            sc.sim.max_inner_iter = r.integer("max_inner_iter", sc.sim.max_inner_iter);
        } else if (section.name == "bus") {
            BusSpec b;
            b.id = r.require_int("id");
            const std::string kind = r.require_str("kind");
            if (kind == "slack") b.kind = BusKind::slack;
            else if (kind == "pv") b.kind = BusKind::pv;
            else if (kind == "pq") b.kind = BusKind::pq;
            else throw ParseError("bus kind must be slack, pv or pq", section.line);
            b.base_kv = r.require_num("base_kv");
            b.v_setpoint = r.num("v_setpoint", b.v_setpoint);
            b.angle_setpoint_deg = r.num("angle_setpoint_deg", b.angle_setpoint_deg);
            sc.buses.push_back(b);
        } else if (section.name == "branch") {
            BranchSpec b;
            b.id = r.require_str("id");
            b.from = r.require_int("from");
            b.to = r.require_int("to");
            b.r = r.num("r", 0.0);
            b.x = r.require_num("x");
            b.b_shunt = r.num("b", 0.0);
            b.tap = r.num("tap", 1.0);
            b.in_service = r.boolean("in_service", true);
            sc.branches.push_back(b);
        } else if (section.name == "load") {
            LoadSpec l;
            l.bus = r.require_int("bus");
            l.p_mw = r.require_num("p_mw");
            l.q_mvar = r.require_num("q_mvar");
            l.scale = r.num("scale", 1.0);
            sc.loads.push_back(l);
        } else if (section.name == "machine") {
            SyncMachineParams p;
            ++n_machine;
            p.name = r.str("name").value_or("SM-" + std::to_string(n_machine));
            p.bus = r.require_int("bus");
            for (const char* key : kMachineNumKeys) {
                if (Kv* kv = r.find(key)) set_machine_field(p, key, to_num(kv->value, kv->line));
            }
            for (const char* key : kMachineFlagKeys) {
                if (Kv* kv = r.find(key)) {
                    set_machine_field(p, key, to_bool(kv->value, kv->line) ? 1.0 : 0.0);
                }
            }
            sc.machines.push_back(std::move(p));
        } else if (section.name == "gfm") {
            GfmVsmParams p;
            ++n_gfm;
            p.name = r.str("name").value_or("GFM-" + std::to_string(n_gfm));
            p.bus = r.require_int("bus");
            for (const char* key : kGfmNumKeys) {
                if (Kv* kv = r.find(key)) set_gfm_field(p, key, to_num(kv->value, kv->line));
            }
            sc.gfms.push_back(std::move(p));
        } else if (section.name == "events") {
            const std::string type = r.require_str("type");
            const double time = r.require_num("time");
            if (time < 0.0) throw ParseError("event time must be non-negative", section.line);
            if (type == "fault") {
                ApplyFault ev;
                ev.time = time;
                ev.bus = r.require_int("bus");
                ev.r = r.num("r", 0.0);
                ev.x = r.num("x", 0.0);
                sc.events.push_back(ev);
            } else if (type == "clear") {
                ClearFault ev;
                ev.time = time;
                ev.trip_branch = r.str("trip");
                sc.events.push_back(ev);
            } else if (type == "load_scale") {
                LoadScale ev;
                ev.time = time;
                ev.bus = r.require_int("bus");
                ev.scale = r.require_num("scale");
                sc.events.push_back(ev);
            } else if (type == "param") {
                ParamOverride ev;
                ev.time = time;
                ev.device = r.require_str("device");
                ev.field = r.require_str("field");
                ev.value = r.require_num("value");
                sc.events.push_back(ev);
            } else {
                throw ParseError("event type must be fault, clear, load_scale or param",
                                 section.line);
            }
        } else { // study
            if (++n_study > 1) throw ParseError("duplicate [study] section", section.line);
            auto& st = sc.study;
            st.name = r.str("name").value_or(st.name);
            st.t_fault = r.num("t_fault", st.t_fault);
            st.fault_bus = r.integer("fault_bus", st.fault_bus);
            st.fault_r = r.num("fault_r", st.fault_r);
            st.fault_x = r.num("fault_x", st.fault_x);
            st.trip_branch = r.str("trip");
            st.t_post = r.num("t_post", st.t_post);
            st.angle_threshold_deg = r.num("angle_threshold_deg", st.angle_threshold_deg);
            st.slip_window_s = r.num("slip_window_s", st.slip_window_s);
            st.cct_lo = r.num("cct_lo", st.cct_lo);
            st.cct_hi = r.num("cct_hi", st.cct_hi);
            st.cct_tol = r.num("cct_tol", st.cct_tol);
            st.ringdown_channel = r.str("ringdown_channel").value_or("");
            st.ringdown_skip = r.num("ringdown_skip", st.ringdown_skip);
        }
        r.finish();
    }
    if (n_system == 0) throw ParseError("scenario has no [system] section", 1);

    validate_scenario(sc);
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open scenario file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

void validate_scenario(const Scenario& sc) {
    std::set<int> bus_ids;
    for (const auto& b : sc.buses) bus_ids.insert(b.id);
    std::set<std::string> branch_ids;
    for (const auto& b : sc.branches) branch_ids.insert(b.id);
    std::set<int> load_buses;
    for (const auto& l : sc.loads) load_buses.insert(l.bus);

    std::set<std::string> device_names;
    const auto check_device = [&](const std::string& name, int bus) {
        if (!device_names.insert(name).second) {
            throw StructuralError("duplicate device name '" + name + "'");
        }
        if (!bus_ids.count(bus)) {
            throw StructuralError("device '" + name + "' references unknown bus " +
                                  std::to_string(bus));
        }
    };
    for (const auto& m : sc.machines) check_device(m.name, m.bus);
    for (const auto& g : sc.gfms) check_device(g.name, g.bus);

    for (const auto& ev : sc.events) {
        std::visit(
            [&](const auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, ApplyFault>) {
                    if (!bus_ids.count(e.bus)) {
                        throw StructuralError("fault event references unknown bus " +
                                              std::to_string(e.bus));
                    }
                } else if constexpr (std::is_same_v<T, ClearFault>) {
                    if (e.trip_branch && !branch_ids.count(*e.trip_branch)) {
                        throw StructuralError("clear event trips unknown branch '" +
                                              *e.trip_branch + "'");
                    }
                } else if constexpr (std::is_same_v<T, LoadScale>) {
                    if (!load_buses.count(e.bus)) {
                        throw StructuralError("load_scale event targets bus " +
                                              std::to_string(e.bus) + " which has no load");
                    }
                } else if constexpr (std::is_same_v<T, ParamOverride>) {
                    if (!device_names.count(e.device)) {
                        throw StructuralError("param event targets unknown device '" + e.device +
                                              "'");
                    }
                    // Probe field validity against a copy.
                    for (const auto& m : sc.machines) {
                        if (m.name == e.device) {
                            SyncMachineParams tmp = m;
                            set_machine_field(tmp, e.field, e.value);
                        }
                    }
                    for (const auto& g : sc.gfms) {
                        if (g.name == e.device) {
                            GfmVsmParams tmp = g;
                            set_gfm_field(tmp, e.field, e.value);
                        }
                    }
                }
            },
            ev);
    }

    const auto& st = sc.study;
    if (st.fault_bus >= 0 && !bus_ids.count(st.fault_bus)) {
        throw StructuralError("study fault_bus references unknown bus " +
                              std::to_string(st.fault_bus));
    }
    if (st.trip_branch && !branch_ids.count(*st.trip_branch)) {
        throw StructuralError("study trips unknown branch '" + *st.trip_branch + "'");
    }
    if (!st.ringdown_channel.empty()) {
        const auto dot = st.ringdown_channel.rfind('.');
        static const std::set<std::string> channels = {"angle_deg", "speed_pu", "p_mw",
                                                       "q_mvar",    "v_pu",     "i_pu"};
        if (dot == std::string::npos ||
            !device_names.count(st.ringdown_channel.substr(0, dot)) ||
            !channels.count(st.ringdown_channel.substr(dot + 1))) {
            throw StructuralError("study ringdown_channel '" + st.ringdown_channel +
                                  "' does not name <device>.<channel>");
        }
    }
}

std::string serialize_scenario(const Scenario& sc) {
    std::ostringstream out;
    out << "[system]\n";
    out << "name = " << sc.name << "\n";
    out << "s_base_mva = " << num_str(sc.s_base_mva) << "\n";
    out << "f_hz = " << num_str(sc.f_hz) << "\n";
    out << "t_end = " << num_str(sc.sim.t_end) << "\n";
    out << "dt = " << num_str(sc.sim.dt) << "\n";
    out << "integrator = "
        << (sc.sim.integrator == Integrator::trapezoidal ? "trapezoidal" : "rk4") << "\n";
    out << "network_solve_tol = " << num_str(sc.sim.network_solve_tol) << "\n";
    out << "max_inner_iter = " << sc.sim.max_inner_iter << "\n";

    for (const auto& b : sc.buses) {
        out << "\n[bus]\n";
        out << "id = " << b.id << "\n";
        out << "kind = "
            << (b.kind == BusKind::slack ? "slack" : b.kind == BusKind::pv ? "pv" : "pq") << "\n";
        out << "base_kv = " << num_str(b.base_kv) << "\n";
        out << "v_setpoint = " << num_str(b.v_setpoint) << "\n";
        out << "angle_setpoint_deg = " << num_str(b.angle_setpoint_deg) << "\n";
    }
    for (const auto& b : sc.branches) {
        out << "\n[branch]\n";
        out << "id = " << b.id << "\n";
        out << "from = " << b.from << "\n";
        out << "to = " << b.to << "\n";
        out << "r = " << num_str(b.r) << "\n";
        out << "x = " << num_str(b.x) << "\n";
        out << "b = " << num_str(b.b_shunt) << "\n";
        out << "tap = " << num_str(b.tap) << "\n";
        out << "in_service = " << (b.in_service ? "true" : "false") << "\n";
    }
    for (const auto& l : sc.loads) {
        out << "\n[load]\n";
        out << "bus = " << l.bus << "\n";
        out << "p_mw = " << num_str(l.p_mw) << "\n";
        out << "q_mvar = " << num_str(l.q_mvar) << "\n";
        out << "scale = " << num_str(l.scale) << "\n";
    }
    for (const auto& m : sc.machines) {
        out << "\n[machine]\n";
        out << "name = " << m.name << "\n";
        out << "bus = " << m.bus << "\n";
        out << "s_rated_mva = " << num_str(m.s_rated_mva) << "\n";
        out << "p_dispatch_mw = " << num_str(m.p_dispatch_mw) << "\n";
        out << "h = " << num_str(m.h) << "\n";
        out << "d = " << num_str(m.d) << "\n";
        out << "xd = " << num_str(m.xd) << "\n";
        out << "xq = " << num_str(m.xq) << "\n";
        out << "xdp = " << num_str(m.xdp) << "\n";
        out << "xqp = " << num_str(m.xqp) << "\n";
        out << "td0p = " << num_str(m.td0p) << "\n";
        out << "tq0p = " << num_str(m.tq0p) << "\n";
        out << "ra = " << num_str(m.ra) << "\n";
        out << "exciter_enabled = " << (m.exciter.enabled ? "true" : "false") << "\n";
        out << "ka = " << num_str(m.exciter.ka) << "\n";
        out << "ta = " << num_str(m.exciter.ta) << "\n";
        out << "efd_min = " << num_str(m.exciter.efd_min) << "\n";
        out << "efd_max = " << num_str(m.exciter.efd_max) << "\n";
        out << "pss_enabled = " << (m.pss.enabled ? "true" : "false") << "\n";
        out << "pss_ks = " << num_str(m.pss.ks) << "\n";
        out << "pss_tw = " << num_str(m.pss.tw) << "\n";
        out << "pss_t1 = " << num_str(m.pss.t1) << "\n";
        out << "pss_t2 = " << num_str(m.pss.t2) << "\n";
        out << "pss_t3 = " << num_str(m.pss.t3) << "\n";
        out << "pss_t4 = " << num_str(m.pss.t4) << "\n";
        out << "pss_vs_max = " << num_str(m.pss.vs_max) << "\n";
        out << "pss_vs_min = " << num_str(m.pss.vs_min) << "\n";
        out << "gov_enabled = " << (m.governor.enabled ? "true" : "false") << "\n";
        out << "gov_droop = " << num_str(m.governor.droop) << "\n";
        out << "gov_tg = " << num_str(m.governor.tg) << "\n";
    }
    for (const auto& g : sc.gfms) {
        out << "\n[gfm]\n";
        out << "name = " << g.name << "\n";
        out << "bus = " << g.bus << "\n";
        out << "s_rated_mva = " << num_str(g.s_rated_mva) << "\n";
        out << "p_dispatch_mw = " << num_str(g.p_dispatch_mw) << "\n";
        out << "ta_vsm = " << num_str(g.ta_vsm) << "\n";
        out << "d_gfm = " << num_str(g.d_gfm) << "\n";
        out << "i_max = " << num_str(g.i_max) << "\n";
        out << "x_c = " << num_str(g.x_c) << "\n";
        out << "t_volt = " << num_str(g.t_volt) << "\n";
        out << "t_curr = " << num_str(g.t_curr) << "\n";
        out << "pll_kp = " << num_str(g.pll.kp) << "\n";
        out << "pll_ki = " << num_str(g.pll.ki) << "\n";
        out << "pll_tf = " << num_str(g.pll.tf) << "\n";
    }
    for (const auto& ev : sc.events) {
        out << "\n[events]\n";
        std::visit(
            [&](const auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, ApplyFault>) {
                    out << "type = fault\n";
                    out << "time = " << num_str(e.time) << "\n";
                    out << "bus = " << e.bus << "\n";
                    out << "r = " << num_str(e.r) << "\n";
                    out << "x = " << num_str(e.x) << "\n";
                } else if constexpr (std::is_same_v<T, ClearFault>) {
                    out << "type = clear\n";
                    out << "time = " << num_str(e.time) << "\n";
                    if (e.trip_branch) out << "trip = " << *e.trip_branch << "\n";
                } else if constexpr (std::is_same_v<T, LoadScale>) {
                    out << "type = load_scale\n";
                    out << "time = " << num_str(e.time) << "\n";
                    out << "bus = " << e.bus << "\n";
                    out << "scale = " << num_str(e.scale) << "\n";
                } else if constexpr (std::is_same_v<T, ParamOverride>) {
                    out << "type = param\n";
                    out << "time = " << num_str(e.time) << "\n";
                    out << "device = " << e.device << "\n";
                    out << "field = " << e.field << "\n";
                    out << "value = " << num_str(e.value) << "\n";
                }
            },
            ev);
    }

    const auto& st = sc.study;
    out << "\n[study]\n";
    out << "name = " << st.name << "\n";
    out << "t_fault = " << num_str(st.t_fault) << "\n";
    if (st.fault_bus >= 0) out << "fault_bus = " << st.fault_bus << "\n";
    out << "fault_r = " << num_str(st.fault_r) << "\n";
    out << "fault_x = " << num_str(st.fault_x) << "\n";
    if (st.trip_branch) out << "trip = " << *st.trip_branch << "\n";
    out << "t_post = " << num_str(st.t_post) << "\n";
    out << "angle_threshold_deg = " << num_str(st.angle_threshold_deg) << "\n";
    out << "slip_window_s = " << num_str(st.slip_window_s) << "\n";
    out << "cct_lo = " << num_str(st.cct_lo) << "\n";
    out << "cct_hi = " << num_str(st.cct_hi) << "\n";
    out << "cct_tol = " << num_str(st.cct_tol) << "\n";
    if (!st.ringdown_channel.empty()) {
        out << "ringdown_channel = " << st.ringdown_channel << "\n";
    }
    out << "ringdown_skip = " << num_str(st.ringdown_skip) << "\n";
    return out.str();
}

void apply_override(Scenario& sc, const std::string& path, double value) {
    const auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size()) {
        throw StructuralError("override path must be <target>.<field>: '" + path + "'");
    }
    const std::string head = path.substr(0, dot);
    std::string field = path.substr(dot + 1);
    std::replace(field.begin(), field.end(), '.', '_');

    if (head == "generators") {
        if (field != "p_dispatch_mw") {
            throw StructuralError("the generators.* override supports only p_dispatch_mw");
        }
        if (sc.machines.empty() && sc.gfms.empty()) {
            throw StructuralError("no generators to override");
        }
        for (auto& m : sc.machines) m.p_dispatch_mw = value;
        for (auto& g : sc.gfms) g.p_dispatch_mw = value;
        return;
    }
    if (head == "machine") {
        if (sc.machines.empty()) throw StructuralError("no [machine] to override");
        for (auto& m : sc.machines) set_machine_field(m, field, value);
        return;
    }
    if (head == "gfm") {
        if (sc.gfms.empty()) throw StructuralError("no [gfm] to override");
        for (auto& g : sc.gfms) set_gfm_field(g, field, value);
        return;
    }
    for (auto& m : sc.machines) {
        if (m.name == head) {
            set_machine_field(m, field, value);
            return;
        }
    }
    for (auto& g : sc.gfms) {
        if (g.name == head) {
            set_gfm_field(g, field, value);
            return;
        }
    }
    throw StructuralError("override target '" + head + "' matches no device");
}

void apply_override(Scenario& sc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw StructuralError("override must look like path=value: '" + assignment + "'");
    }
    const std::string path = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    apply_override(sc, path, to_num(value, 0));
}

NetworkModel make_network(const Scenario& sc) {
    return NetworkModel(sc.buses, sc.branches, sc.loads, sc.s_base_mva);
}

std::vector<Device> make_devices(const Scenario& sc) {
    std::vector<Device> devices;
    for (const auto& m : sc.machines) devices.emplace_back(SyncMachine(m));
    for (const auto& g : sc.gfms) devices.emplace_back(GfmVsm(g));
    return devices;
}

std::vector<GenDispatch> make_dispatch(const Scenario& sc) {
    std::vector<GenDispatch> d;
    for (const auto& m : sc.machines) d.push_back({m.bus, m.p_dispatch_mw});
    for (const auto& g : sc.gfms) d.push_back({g.bus, g.p_dispatch_mw});
    return d;
}

SystemBase make_base(const Scenario& sc) {
    return SystemBase{sc.s_base_mva, sc.f_hz};
}

std::map<std::string, DeviceTech> technology_map(const Scenario& sc) {
    std::map<std::string, DeviceTech> map;
    for (const auto& m : sc.machines) map[m.name] = DeviceTech::synchronous_machine;
    for (const auto& g : sc.gfms) map[g.name] = DeviceTech::gfm_converter;
    return map;
}

FaultTemplate make_fault_template(const Scenario& sc) {
    const auto& st = sc.study;
    if (st.fault_bus < 0) {
        throw StructuralError("the scenario's [study] section declares no fault template "
                              "(fault_bus missing)");
    }
    FaultTemplate tpl;
    tpl.t_fault = st.t_fault;
    tpl.bus = st.fault_bus;
    tpl.r = st.fault_r;
    tpl.x = st.fault_x;
    tpl.trip_branch = st.trip_branch;
    tpl.t_post = st.t_post;
    tpl.angle_threshold_deg = st.angle_threshold_deg;
    tpl.slip_window_s = st.slip_window_s;
    return tpl;
}

std::string ringdown_channel(const Scenario& sc) {
    if (!sc.study.ringdown_channel.empty()) return sc.study.ringdown_channel;
    if (!sc.machines.empty()) return sc.machines.front().name + ".angle_deg";
    if (!sc.gfms.empty()) return sc.gfms.front().name + ".angle_deg";
    throw StructuralError("scenario has no dynamic devices");
}

DynamicSystem make_system(const Scenario& sc) {
    const NetworkModel net = make_network(sc);
    const auto pf = solve_power_flow(net, make_dispatch(sc));
    DynamicSystem sys(net, make_devices(sc), make_base(sc), sc.sim.network_solve_tol,
                      sc.sim.max_inner_iter);
    sys.initialize(pf, sc.sim.equilibrium_tol);
    return sys;
}

} // namespace rmsim
