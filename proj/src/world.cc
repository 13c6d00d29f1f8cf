#include "fido2d/world.h"

#include <utility>

#include <nlohmann/json.hpp>

namespace fido2d::harness {

using adversary::Endpoint;
using adversary::EndpointKind;
using adversary::Envelope;

namespace {

template <typename T>
const T* As(const messages::Message& m) {
  return std::get_if<T>(&m);
}

Error Refused(std::string detail) {
  return MakeError(ErrorCode::kInvalidInput, std::move(detail));
}

}  // namespace

std::string RunResult::LogText() const {
  std::string out;
  for (const auto& line : log) {
    out += line;
    out += '\n';
  }
  return out;
}

World::AccountState::AccountState(const AccountDecl& d, EventSink sink,
                                  crypto::Rng rb, crypto::Rng ra)
    : decl(d),
      b(d.name, d.server, sink),
      a(d.name, d.server, sink),
      user(d.mode),
      rng_b(std::move(rb)),
      rng_a(std::move(ra)) {}

World::World(const Schedule& header)
    : header_(header),
      rng_(header.seed),
      adversary_(rng_.Fork("adversary")) {
  header_.steps.clear();
  EventSink sink = [this](TraceEvent e) { Emit(std::move(e)); };
  for (const auto& decl : header_.accounts) {
    accounts_.emplace(decl.name,
                      std::make_unique<AccountState>(
                          decl, sink, rng_.Fork("device:b:" + decl.name),
                          rng_.Fork("device:a:" + decl.name)));
  }
  for (const auto& p : header_.phishers) {
    adversary_.AddPhisher(
        adversary::Phisher{p.id, p.fake_server_id, p.target_server});
  }
  nlohmann::ordered_json meta;
  meta["seed"] = header_.seed;
  meta["signature"] = crypto::kSignatureAlgorithm;
  meta["nonce_bytes"] = crypto::kNonceSize;
  for (const auto& a : header_.accounts) {
    meta["accounts"].push_back(
        {a.name, a.server, std::string(devices::UserModeName(a.mode))});
  }
  for (const auto& p : header_.phishers) {
    meta["phishers"].push_back({p.id, p.fake_server_id, p.target_server});
  }
  log_.push_back(meta.dump());
}

void World::Emit(TraceEvent event) {
  event.step = step_;
  log_.push_back(event.ToLogLine());
  trace_.push_back(std::move(event));
}

bool World::has_server(std::string_view id) const {
  return servers_.find(id) != servers_.end();
}

bool World::registered(std::string_view account) const {
  auto it = accounts_.find(account);
  return it != accounts_.end() && it->second->registered;
}

bool World::compromised(std::string_view account, devices::Role role) const {
  auto it = accounts_.find(account);
  if (it == accounts_.end()) return false;
  return role == devices::Role::kB ? it->second->b.compromised()
                                   : it->second->a.compromised();
}

std::optional<messages::Message> World::Peek(uint64_t id) const {
  const Envelope* e = network_.Find(id);
  if (!e) return std::nullopt;
  auto m = messages::Decode(e->bytes);
  if (!m) return std::nullopt;
  return std::move(m).value();
}

World::AccountState* World::FindAccount(std::string_view name) {
  auto it = accounts_.find(name);
  return it == accounts_.end() ? nullptr : it->second.get();
}

const PhisherDecl* World::FindPhisher(std::string_view id) const {
  return header_.FindPhisher(id);
}

Bytes World::EncodeOrDie(const messages::Message& message) const {
  auto bytes = messages::Encode(message);
  if (!bytes) {
    throw crypto::InternalError("cannot encode " +
                                std::string(messages::MessageName(message)) +
                                ": " + bytes.error().ToString());
  }
  return std::move(bytes).value();
}

void World::Apply(const Action& action) {
  ++step_;
  for (auto& [id, server] : servers_) {
    server->AdvanceTo(step_);
  }
  // Trace events emitted by the step follow its action line.
  const size_t at = log_.size();
  auto result = Execute(action);
  adversary_.Observe(network_);
  nlohmann::ordered_json line;
  line["step"] = step_;
  line["action"] = action.ToString();
  line["outcome"] = result ? *result : result.error().ToString();
  log_.insert(log_.begin() + static_cast<std::ptrdiff_t>(at), line.dump());
}

Result<uint64_t> World::Resolve(const Selector& selector) const {
  std::optional<uint64_t> id;
  switch (selector.kind) {
    case Selector::Kind::kIndex:
      if (network_.Find(selector.index)) id = selector.index;
      break;
    case Selector::Kind::kNext:
    case Selector::Kind::kLast: {
      auto ep = Endpoint::Parse(selector.endpoint);
      if (!ep) break;
      id = selector.kind == Selector::Kind::kNext ? network_.NextTo(*ep)
                                                  : network_.LastTo(*ep);
      break;
    }
  }
  if (!id) {
    return Refused("selector " + selector.ToString() + " matches nothing");
  }
  return *id;
}

Result<messages::Message> World::Load(const Selector& selector) const {
  auto id = Resolve(selector);
  if (!id) return id.error();
  auto m = messages::Decode(network_.Find(*id)->bytes);
  if (!m) {
    return MakeError(ErrorCode::kMalformed, m.error().ToString());
  }
  return std::move(m).value();
}

std::optional<std::string> World::WebOrigin(const Endpoint& e) const {
  if (e.kind == EndpointKind::kServer && has_server(e.name)) return e.name;
  if (e.kind == EndpointKind::kPhisher) {
    if (const auto* p = FindPhisher(e.name)) return p->fake_server_id;
  }
  return std::nullopt;
}

Result<std::string> World::Execute(const Action& a) {
  AccountState* acc = nullptr;
  switch (a.kind) {
    case ActionKind::kRegister:
    case ActionKind::kInitiate:
    case ActionKind::kPhish:
    case ActionKind::kInjectRequest:
    case ActionKind::kForgeB:
    case ActionKind::kForgeA:
    case ActionKind::kCompromise:
      acc = FindAccount(a.target);
      if (!acc) {
        return MakeError(ErrorCode::kScheduleError,
                         "unknown account '" + a.target + "'");
      }
      break;
    default:
      break;
  }
  const PhisherDecl* phisher = nullptr;
  if (a.kind == ActionKind::kPhish || a.kind == ActionKind::kPhishRelay ||
      a.kind == ActionKind::kPhishAnswer) {
    phisher = FindPhisher(a.phisher);
    if (!phisher) {
      return MakeError(ErrorCode::kScheduleError,
                       "unknown phisher '" + a.phisher + "'");
    }
  }

  switch (a.kind) {
    case ActionKind::kNewServer:
      return NewServer(a.target);
    case ActionKind::kRegister:
      return Register(*acc);
    case ActionKind::kInitiate:
      return Initiate(*acc, a.data.value_or(""));
    case ActionKind::kPhish:
      return Phish(*acc, *phisher, a.data.value_or(""));
    case ActionKind::kDeliver: {
      auto id = Resolve(a.sel);
      if (!id) return id.error();
      return Deliver(*id);
    }
    case ActionKind::kDrop: {
      auto id = Resolve(a.sel);
      if (!id) return id.error();
      auto r = network_.Drop(*id);
      if (!r) return r.error();
      return "dropped #" + std::to_string(*id);
    }
    case ActionKind::kReplay: {
      auto id = Resolve(a.sel);
      if (!id) return id.error();
      auto r = network_.Replay(*id);
      if (!r) return r.error();
      return "replayed #" + std::to_string(*id) + " as #" + std::to_string(*r);
    }
    case ActionKind::kForward: {
      auto id = Resolve(a.sel);
      if (!id) return id.error();
      auto dest = Endpoint::Parse(a.endpoint);
      if (!dest) return Refused("bad endpoint '" + a.endpoint + "'");
      auto r = network_.Forward(*id, *dest);
      if (!r) return r.error();
      return "forwarded #" + std::to_string(*id) + " as #" +
             std::to_string(*r);
    }
    case ActionKind::kModify: {
      auto id = Resolve(a.sel);
      if (!id) return id.error();
      auto r = network_.Modify(*id, a.offset, a.patch);
      if (!r) return r.error();
      return "modified #" + std::to_string(*id) + " into #" +
             std::to_string(*r);
    }
    case ActionKind::kInject: {
      auto dest = Endpoint::Parse(a.endpoint);
      auto origin = a.as ? Endpoint::Parse(*a.as) : Endpoint::Attacker();
      if (!dest || !origin) return Refused("bad endpoint");
      auto r = network_.Inject(*origin, *dest, a.patch);
      if (!r) return r.error();
      return "injected #" + std::to_string(*r);
    }
    case ActionKind::kInjectRequest: {
      auto origin = a.as ? Endpoint::Parse(*a.as) : Endpoint::Attacker();
      if (!origin) return Refused("bad endpoint '" + *a.as + "'");
      messages::TransactionRequest req{acc->decl.name, a.data.value_or("")};
      auto r = network_.Inject(*origin, Endpoint::Server(acc->decl.server),
                               EncodeOrDie(req));
      if (!r) return r.error();
      return "injected #" + std::to_string(*r);
    }
    case ActionKind::kForgeB:
    case ActionKind::kForgeA:
      return Forge(a, *acc);
    case ActionKind::kPhishRelay:
      return PhishRelay(a, *phisher);
    case ActionKind::kPhishAnswer:
      return PhishAnswer(a, *phisher);
    case ActionKind::kCompromise:
      return Compromise(*acc, a.role);
    case ActionKind::kObserve:
      adversary_.Observe(network_);
      return "knows " + std::to_string(adversary_.knowledge_size()) +
             " messages";
  }
  return Refused("unhandled action");
}

Result<std::string> World::NewServer(const std::string& id) {
  if (has_server(id)) {
    return Refused("server '" + id + "' already exists");
  }
  server::ServerConfig config{id};
  servers_.emplace(id, std::make_unique<server::RelyingParty>(
                           config, rng_.Fork("server:" + id), registry_,
                           [this](TraceEvent e) { Emit(std::move(e)); }));
  servers_.at(id)->AdvanceTo(step_);
  Emit(TraceEvent{EventLabel::kNewServer, "", id, "", 0});
  return std::string("ok");
}

// Both registration ceremonies in one step: devices are honest while they
// register, so the attacker gets to watch but not interleave.
Result<std::string> World::Register(AccountState& acc) {
  if (acc.registered) return Refused("already registered");
  auto it = servers_.find(acc.decl.server);
  if (it == servers_.end()) {
    return Refused("server '" + acc.decl.server + "' does not exist yet");
  }
  server::RelyingParty& server = *it->second;
  const Endpoint s = Endpoint::Server(acc.decl.server);
  const Endpoint b = Endpoint::DeviceB(acc.decl.name);
  const Endpoint a = Endpoint::DeviceA(acc.decl.name);
  auto record = [&](const Endpoint& from, const Endpoint& to,
                    const messages::Message& m) {
    const uint64_t id = network_.Send(from, to, EncodeOrDie(m));
    (void)network_.Take(id);
  };

  record(b, s, messages::RegistrationRequest{acc.decl.name});
  auto options = server.BeginRegistration(acc.decl.name);
  if (!options) return options.error();
  record(s, b, *options);

  auto credential = acc.b.CreateCredential(*options, true, acc.rng_b);
  if (!credential) return credential.error();
  messages::RegistrationResponse response{acc.decl.name, credential->first,
                                          credential->second};
  record(b, s, response);
  auto link = server.FinishRegistrationB(acc.decl.name, credential->first,
                                         credential->second);
  if (!link) return link.error();
  record(s, b, *link);

  auto linked = acc.a.Link(link->value.ToHex(), true, acc.rng_a);
  if (!linked) return linked.error();
  record(a, s, *linked);
  auto done = server.FinishRegistrationA(linked->link_nonce,
                                         linked->public_key,
                                         linked->attestation);
  if (!done) return done.error();
  record(s, a, messages::AccountActive{acc.decl.name});
  acc.registered = true;
  return std::string("ok");
}

Result<std::string> World::Initiate(AccountState& acc,
                                    const std::string& data) {
  if (!acc.registered) return Refused("account not registered");
  if (!has_server(acc.decl.server)) return Refused("no such server");
  const std::string& s = acc.decl.server;
  Emit(TraceEvent{EventLabel::kTransactionBegin, acc.decl.name, s, data, 0});
  acc.user.Initiate(s, data);
  messages::TransactionRequest req{acc.decl.name, data};
  acc.b.RecordRequest(s, req);
  const uint64_t id = network_.Send(Endpoint::DeviceB(acc.decl.name),
                                    Endpoint::Server(s), EncodeOrDie(req));
  return "sent #" + std::to_string(id);
}

Result<std::string> World::Phish(AccountState& acc, const PhisherDecl& phisher,
                                 const std::string& data) {
  if (!acc.registered) return Refused("account not registered");
  Emit(TraceEvent{EventLabel::kPhishBegin, acc.decl.name,
                  phisher.fake_server_id, data, 0});
  acc.user.Initiate(phisher.fake_server_id, data);
  messages::TransactionRequest req{acc.decl.name, data};
  acc.b.RecordRequest(phisher.fake_server_id, req);
  const uint64_t id =
      network_.Send(Endpoint::DeviceB(acc.decl.name),
                    Endpoint::Phisher(phisher.id), EncodeOrDie(req));
  return "sent #" + std::to_string(id);
}

Result<std::string> World::Deliver(uint64_t id) {
  auto env = network_.Take(id);
  if (!env) return env.error();
  const Endpoint& dest = env->destination;
  switch (dest.kind) {
    case EndpointKind::kServer: {
      auto it = servers_.find(dest.name);
      if (it == servers_.end()) return Refused("no such server; lost");
      return DeliverToServer(*env, *it->second);
    }
    case EndpointKind::kDeviceB:
    case EndpointKind::kDeviceA: {
      AccountState* acc = FindAccount(dest.name);
      if (!acc) return Refused("no such device; lost");
      return dest.kind == EndpointKind::kDeviceB ? DeliverToB(*env, *acc)
                                                 : DeliverToA(*env, *acc);
    }
    default:
      return Refused("attacker endpoints are not delivered to");
  }
}

Result<std::string> World::DeliverToServer(const Envelope& env,
                                           server::RelyingParty& server) {
  auto m = messages::Decode(env.bytes);
  if (!m) return MakeError(ErrorCode::kMalformed, m.error().ToString());
  if (As<messages::RegistrationRequest>(*m) ||
      As<messages::RegistrationResponse>(*m) ||
      As<messages::LinkResponse>(*m)) {
    return MakeError(ErrorCode::kRegistrationRefused,
                     "registration happens only in a register step");
  }
  auto out = server::Dispatch(server, *m);
  const Endpoint self = Endpoint::Server(server.server_id());
  std::string note(messages::MessageName(*m));
  if (out.reply) {
    note += "; replied #" +
            std::to_string(network_.Send(self, env.origin,
                                         EncodeOrDie(*out.reply)));
  }
  if (out.push) {
    note += "; pushed #" +
            std::to_string(network_.Send(self,
                                         Endpoint::DeviceA(out.push_username),
                                         EncodeOrDie(*out.push)));
  }
  if (out.error) {
    if (out.error->code == ErrorCode::kTransactionAborted) ++aborts_;
    return Error{out.error->code, out.error->detail + " (" + note + ")"};
  }
  return note;
}

Result<std::string> World::DeliverToB(const Envelope& env, AccountState& acc) {
  auto m = messages::Decode(env.bytes);
  if (!m) return MakeError(ErrorCode::kMalformed, m.error().ToString());
  const auto* reply = As<messages::ChallengeReply>(*m);
  if (!reply) {
    return "read " + std::string(messages::MessageName(*m));
  }
  auto origin = WebOrigin(env.origin);
  if (!origin) {
    return MakeError(ErrorCode::kOriginMismatch,
                     env.origin.ToString() + " is not a web origin");
  }
  auto response = acc.b.HandleChallengeReply(*origin, *reply, true);
  if (!response) return response.error();
  const uint64_t id = network_.Send(Endpoint::DeviceB(acc.decl.name),
                                    env.origin, EncodeOrDie(*response));
  return "signed; sent #" + std::to_string(id);
}

Result<std::string> World::DeliverToA(const Envelope& env, AccountState& acc) {
  const Endpoint home = Endpoint::Server(acc.decl.server);
  if (!env.authentic || env.origin != home) {
    return MakeError(ErrorCode::kChannelViolation,
                     "device A listens only to " + home.ToString());
  }
  auto m = messages::Decode(env.bytes);
  if (!m) return MakeError(ErrorCode::kMalformed, m.error().ToString());
  const auto* options = As<messages::TransactionOptions>(*m);
  if (!options) {
    return "read " + std::string(messages::MessageName(*m));
  }
  auto assertion = acc.a.ConfirmTransaction(*options, acc.user);
  if (!assertion) return assertion.error();
  messages::AssertionResponse response{acc.decl.name, options->challenge,
                                       std::move(assertion).value()};
  const uint64_t id = network_.Send(Endpoint::DeviceA(acc.decl.name), home,
                                    EncodeOrDie(response));
  return "confirmed; sent #" + std::to_string(id);
}

Result<std::string> World::Forge(const Action& a, AccountState& acc) {
  auto m = Load(a.sel);
  if (!m) return m.error();
  std::optional<messages::TransactionOptions> options;
  if (const auto* o = As<messages::TransactionOptions>(*m)) options = *o;
  if (const auto* r = As<messages::ChallengeReply>(*m)) options = r->options;
  if (!options) {
    return Refused("selected message carries no challenge");
  }
  const bool for_a = a.kind == ActionKind::kForgeA;
  std::optional<std::string> extension;
  if (for_a) extension = a.data ? a.data : options->transaction_data;
  auto assertion = adversary_.Forge(
      acc.decl.name, for_a ? devices::Role::kA : devices::Role::kB,
      options->server_id, extension, options->challenge);
  if (!assertion) return assertion.error();
  messages::AssertionResponse response{acc.decl.name, options->challenge,
                                       std::move(assertion).value()};
  auto id = network_.Inject(Endpoint::Attacker(),
                            Endpoint::Server(acc.decl.server),
                            EncodeOrDie(response));
  if (!id) return id.error();
  const bool leaked = adversary_.HasKey(
      acc.decl.name, for_a ? devices::Role::kA : devices::Role::kB);
  return std::string(leaked ? "signed with leaked key" : "signed with own key") +
         "; injected #" + std::to_string(*id);
}

Result<std::string> World::PhishRelay(const Action& a,
                                      const PhisherDecl& phisher) {
  auto m = Load(a.sel);
  if (!m) return m.error();
  std::optional<messages::TransactionRequest> req;
  if (const auto* r = As<messages::TransactionRequest>(*m)) req = *r;
  if (const auto* r = As<messages::ChallengeReply>(*m)) req = r->request;
  if (!req) return Refused("selected message carries no request");
  if (a.data) req->transaction_data = *a.data;
  auto id = network_.Inject(Endpoint::Phisher(phisher.id),
                            Endpoint::Server(phisher.target_server),
                            EncodeOrDie(*req));
  if (!id) return id.error();
  return "relayed as #" + std::to_string(*id);
}

Result<std::string> World::PhishAnswer(const Action& a,
                                       const PhisherDecl& phisher) {
  auto first = Load(a.sel);
  if (!first) return first.error();
  auto second = Load(a.sel2);
  if (!second) return second.error();
  std::optional<messages::TransactionRequest> req;
  if (const auto* r = As<messages::TransactionRequest>(*first)) req = *r;
  if (const auto* r = As<messages::ChallengeReply>(*first)) req = r->request;
  std::optional<messages::TransactionOptions> options;
  if (const auto* o = As<messages::TransactionOptions>(*second)) options = *o;
  if (const auto* r = As<messages::ChallengeReply>(*second)) {
    options = r->options;
  }
  if (!req || !options) {
    return Refused("need a request and a challenge to answer with");
  }
  if (!FindAccount(req->username)) {
    return Refused("no device for '" + req->username + "'");
  }
  if (a.rebind) options->server_id = phisher.fake_server_id;
  messages::ChallengeReply reply{*req, *options};
  auto id = network_.Inject(Endpoint::Phisher(phisher.id),
                            Endpoint::DeviceB(req->username),
                            EncodeOrDie(reply));
  if (!id) return id.error();
  return "answered as #" + std::to_string(*id);
}

Result<std::string> World::Compromise(AccountState& acc, devices::Role role) {
  // The leak is the registered credential; there is nothing to take before.
  if (!acc.registered) return Refused("account not registered");
  devices::Authenticator& device =
      role == devices::Role::kB ? static_cast<devices::Authenticator&>(acc.b)
                                : acc.a;
  if (device.compromised()) return Refused("already compromised");
  adversary_.AddLeak(acc.decl.name, role, device.Compromise());
  return std::string("key leaked");
}

RunResult World::Finish() {
  RunResult out;
  for (const auto& [id, server] : servers_) {
    for (auto& line : server->Audit()) {
      out.audit_failures.push_back("server " + id + ": " + line);
    }
  }
  for (auto& line : network_.Audit()) {
    out.audit_failures.push_back("network: " + line);
  }
  std::vector<adversary::HonestKey> keys;
  for (const auto& [name, acc] : accounts_) {
    if (auto k = acc->b.public_key()) {
      keys.push_back({"b:" + name, *k, acc->b.compromised(),
                      &acc->b.signed_records()});
    }
    if (auto k = acc->a.public_key()) {
      keys.push_back({"a:" + name, *k, acc->a.compromised(),
                      &acc->a.signed_records()});
    }
  }
  for (auto& line : adversary::AuditKnowledge(adversary_, keys)) {
    out.audit_failures.push_back("knowledge: " + line);
  }
  // Compare users: device A never signs text the user did not confirm.
  for (const auto& [name, acc] : accounts_) {
    size_t confirmed = 0;
    for (const auto& c : acc->a.confirmations()) confirmed += c.confirmed;
    // Each signature past the link attestation must be a confirmation.
    const size_t signatures = acc->a.signed_records().size();
    if (signatures > 0 && signatures - 1 != confirmed) {
      out.audit_failures.push_back("device a:" + name + " signed " +
                                   std::to_string(signatures - 1) +
                                   " transactions but the user confirmed " +
                                   std::to_string(confirmed));
    }
  }
  out.trace = trace_;
  out.log = log_;
  out.aborts = aborts_;
  out.log_digest = crypto::DigestHex(ToBytes(out.LogText()));
  return out;
}

Result<RunResult> Run(const Schedule& schedule) {
  auto valid = ValidateSchedule(schedule);
  if (!valid) return valid.error();
  World world(schedule);
  std::optional<std::string> internal;
  try {
    for (const auto& action : schedule.steps) {
      world.Apply(action);
    }
  } catch (const crypto::InternalError& e) {
    internal = e.what();
  }
  RunResult result = world.Finish();
  result.internal_error = internal;
  return result;
}

}  // namespace fido2d::harness
