/// (category title, verbs, [(technical keyword, colloquial phrase)]).
pub type Category = (&'static str, [&'static str; 3], [(&'static str, &'static str); 8]);

pub const CATEGORIES: [Category; 16] = [
    (
        "Weather",
        ["get", "fetch", "track"],
        [
            ("forecast", "what the sky is up to"),
            ("humidity", "how sticky the air feels"),
            ("precipitation", "whether it will pour"),
            ("temperature", "how hot or cold it is"),
            ("wind", "how breezy it gets"),
            ("uv", "sunburn risk"),
            ("pollen", "allergy stuff floating around"),
            ("alerts", "storm heads up"),
        ],
    ),
    (
        "Finance",
        ["get", "analyze", "compare"],
        [
            ("stock", "company shares"),
            ("dividend", "payout checks from shares"),
            ("earnings", "how much a company made"),
            ("portfolio", "my pile of investments"),
            ("ticker", "short code for a company"),
            ("volatility", "how jumpy the market swings"),
            ("valuation", "what a business is worth"),
            ("quote", "latest trading number"),
        ],
    ),
    (
        "Travel",
        ["search", "book", "compare"],
        [
            ("flights", "plane trips"),
            ("hotels", "places to crash overnight"),
            ("itinerary", "trip plan"),
            ("booking", "locking in a reservation"),
            ("airport", "where planes take off"),
            ("layover", "stop between planes"),
            ("visa", "entry papers for a country"),
            ("luggage", "bags to carry"),
        ],
    ),
    (
        "Music",
        ["get", "search", "list"],
        [
            ("lyrics", "words to a tune"),
            ("playlist", "bunch of tunes in a row"),
            ("album", "full record release"),
            ("artist", "the singer or band"),
            ("genre", "kind of sound"),
            ("tempo", "how fast the beat goes"),
            ("chart", "top hits ranking"),
            ("concert", "live show"),
        ],
    ),
    (
        "News",
        ["get", "search", "list"],
        [
            ("headlines", "top stories"),
            ("article", "news piece"),
            ("publisher", "outlet that prints it"),
            ("breaking", "just happened stuff"),
            ("editorial", "opinion column"),
            ("archive", "old stories"),
            ("byline", "who wrote it"),
            ("topic", "what it is about"),
        ],
    ),
    (
        "Maps",
        ["get", "search", "compute"],
        [
            ("directions", "how to get somewhere"),
            ("geocode", "turn an address into a map point"),
            ("route", "way to drive"),
            ("traffic", "how jammed the roads are"),
            ("distance", "how far apart"),
            ("landmark", "famous spot"),
            ("elevation", "how high up"),
            ("transit", "bus and train options"),
        ],
    ),
    (
        "Sports",
        ["get", "list", "track"],
        [
            ("scores", "who is winning"),
            ("fixtures", "upcoming games"),
            ("standings", "league table spots"),
            ("roster", "who plays on the team"),
            ("injuries", "hurt players"),
            ("odds", "betting chances"),
            ("highlights", "best moments clips"),
            ("tournament", "big competition bracket"),
        ],
    ),
    (
        "Health",
        ["get", "check", "track"],
        [
            ("symptoms", "what feels wrong"),
            ("medication", "pills to take"),
            ("dosage", "how much medicine"),
            ("clinic", "doctor office nearby"),
            ("fitness", "staying in shape"),
            ("sleep", "shut eye"),
            ("heartrate", "how fast my heart beats"),
            ("vaccine", "shots to stay safe"),
        ],
    ),
    (
        "Food",
        ["search", "get", "list"],
        [
            ("recipes", "ways to cook a dish"),
            ("ingredients", "what goes in a dish"),
            ("restaurant", "place to eat out"),
            ("cuisine", "style of cooking"),
            ("calories", "how fattening it is"),
            ("allergens", "things that make eaters sick"),
            ("menu", "what they serve"),
            ("delivery", "grub brought to the door"),
        ],
    ),
    (
        "Movies",
        ["search", "get", "list"],
        [
            ("showtimes", "when the film plays"),
            ("trailer", "sneak peek clip"),
            ("cast", "who acts in it"),
            ("ratings", "how good people think it is"),
            ("streaming", "watch online"),
            ("boxoffice", "ticket money a film made"),
            ("director", "who made the film"),
            ("subtitles", "words on screen"),
        ],
    ),
    (
        "Shopping",
        ["search", "compare", "track"],
        [
            ("products", "things to buy"),
            ("prices", "how much stuff costs"),
            ("inventory", "what is left on the shelves"),
            ("coupons", "money off codes"),
            ("reviews", "what buyers said"),
            ("shipping", "sending the package"),
            ("cart", "basket of picks"),
            ("barcode", "striped label on a box"),
        ],
    ),
    (
        "Jobs",
        ["search", "list", "match"],
        [
            ("vacancies", "places hiring"),
            ("salary", "how much it pays"),
            ("resume", "my work history paper"),
            ("recruiter", "person who hires"),
            ("internship", "student work gig"),
            ("skills", "what i am good at"),
            ("interview", "sit down chat with a boss"),
            ("remote", "work from my couch"),
        ],
    ),
    (
        "Realty",
        ["search", "get", "estimate"],
        [
            ("listings", "homes up for grabs"),
            ("mortgage", "home loan"),
            ("rent", "monthly cost to live somewhere"),
            ("appraisal", "official house value guess"),
            ("neighborhood", "the area around a house"),
            ("bedrooms", "spots for beds"),
            ("zoning", "what can be built where"),
            ("tenant", "person renting"),
        ],
    ),
    (
        "Crypto",
        ["get", "track", "convert"],
        [
            ("bitcoin", "the famous digital coin"),
            ("wallet", "digital coin purse"),
            ("blockchain", "shared digital ledger"),
            ("gas", "fee to move coins"),
            ("token", "little digital coin"),
            ("nft", "digital collectible"),
            ("mining", "making coins with computers"),
            ("exchange", "place to swap coins"),
        ],
    ),
    (
        "Language",
        ["translate", "detect", "lookup"],
        [
            ("translation", "say it in another tongue"),
            ("dictionary", "word meanings book"),
            ("pronunciation", "how to say it out loud"),
            ("grammar", "sentence rules"),
            ("synonyms", "words that mean the same"),
            ("locale", "which tongue it is"),
            ("transliteration", "write it in other letters"),
            ("idioms", "sayings"),
        ],
    ),
    (
        "Calendar",
        ["create", "list", "update"],
        [
            ("events", "things happening"),
            ("reminders", "nudges not to forget"),
            ("schedule", "my plans for the day"),
            ("timezone", "local clock difference"),
            ("holidays", "days off"),
            ("meetings", "get togethers at work"),
            ("availability", "when people are free"),
            ("agenda", "list of things to discuss"),
        ],
    ),
];

pub const BRANDS: [&str; 24] = [
    "Acme", "Bolt", "Cirrus", "Delta", "Echo", "Fjord", "Garnet", "Helix", "Ion", "Juno", "Kestrel", "Lumen",
    "Mosaic", "Nimbus", "Orbit", "Pico", "Quill", "Rally", "Sable", "Tidal", "Umber", "Vertex", "Willow", "Zephyr",
];

pub const AUDIENCES: [&str; 4] = ["developers", "apps", "analysts", "teams"];

pub const PARAMS: [&str; 6] = ["location", "name", "date", "identifier", "region", "keyword"];

pub const ENTITIES: [&str; 12] = [
    "Berlin",
    "my team",
    "next week",
    "the weekend",
    "Tokyo",
    "our project",
    "my family",
    "tomorrow",
    "this month",
    "Chicago",
    "a client",
    "the trip",
];

pub const FILLERS: [&str; 6] = ["honestly", "you know", "kinda", "basically", "so um", "like"];
